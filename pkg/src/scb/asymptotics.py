"""Closed-form calibration constants for maximum-deviation bands."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate, special

from .errors import BandwidthTooLarge, DomainError
from .kernels import KernelProfile, get_kernel


@dataclass(frozen=True)
class BandCalibration:
    level: float
    method: str
    d_n: float
    z_alpha: float
    halfwidth_scale: float
    bbar: float
    log_arg: str = "bbar"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class LrdSpec:
    beta: float
    ell: float
    c_beta: float

    def to_dict(self) -> dict:
        return asdict(self)


def _check_alpha(alpha):
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"level alpha must lie in (0, 1), got {alpha!r}")


def _log_inv(bbar: float) -> float:
    if not (0.0 < bbar < 1.0):
        raise BandwidthTooLarge(
            f"relative bandwidth b/(u-l) = {bbar:.6g} must lie in (0, 1)")
    L = -math.log(bbar)
    if L <= 1.0:
        raise BandwidthTooLarge(
            f"relative bandwidth b/(u-l) = {bbar:.6g} too large: need log(1/bbar) > 1")
    return L


def normalizing_dn(bbar: float, profile: KernelProfile | str = "epanechnikov") -> float:
    """Centering constant d_n of the Gumbel limit for the maximum deviation.

    Uses the boundary constant K1 when it is positive and the derivative
    constant K2 otherwise.
    """
    k = get_kernel(profile)
    L = _log_inv(bbar)
    root = math.sqrt(2.0 * L)
    if k.K1 > 0:
        return root + (math.log(k.K1 / math.sqrt(math.pi)) + 0.5 * math.log(L)) / root
    if k.K2 <= 0:
        raise DomainError(f"kernel {k.name!r} has K1 = K2 = 0")
    return root + math.log(math.sqrt(k.K2) / (math.sqrt(2.0) * math.pi)) / root


def gumbel_cdf(z):
    """exp(-2 exp(-z)), the limit law of the normalised two-sided maximum."""
    z = np.asarray(z, dtype=float)
    out = np.exp(-2.0 * np.exp(-z))
    return float(out) if out.ndim == 0 else out


def gumbel_quantile(alpha: float) -> float:
    """z with gumbel_cdf(z) = 1 - alpha."""
    _check_alpha(alpha)
    return -math.log(-0.5 * math.log1p(-alpha))


def halfwidth_l1(alpha: float, bbar: float, profile: KernelProfile | str = "epanechnikov",
                 log_arg_b: float | None = None) -> float:
    """Band multiplier z_alpha / (2 log(1/b))^(1/2) + d_n.

    The logarithm in the first term uses ``bbar`` unless ``log_arg_b`` (the
    raw bandwidth) is given; d_n always uses ``bbar``.
    """
    z = gumbel_quantile(alpha)
    L = _log_inv(bbar if log_arg_b is None else log_arg_b)
    return z / math.sqrt(2.0 * L) + normalizing_dn(bbar, profile)


def grid_count(b: float, length: float = 1.0) -> int:
    return math.ceil(length / (2.0 * b))


def halfwidth_l2(alpha: float, b: float, length: float = 1.0) -> float:
    """Multiplier of the grid-point band with J_n = ceil(length / (2b)) points."""
    z = gumbel_quantile(alpha)
    if not (b > 0):
        raise DomainError("bandwidth must be positive")
    J = grid_count(b, length)
    if J < 2:
        raise DomainError(f"grid count J_n = {J} < 2; bandwidth too large")
    LJ = math.log(J)
    root = math.sqrt(2.0 * LJ)
    return z / root + root - (0.5 * math.log(LJ) + math.log(2.0 * math.sqrt(math.pi))) / root


def calibrate_gumbel(alpha: float, b: float, interval, profile="epanechnikov",
                     l1_log_arg: str = "bbar") -> BandCalibration:
    l, u = interval
    bbar = b / (u - l)
    z = gumbel_quantile(alpha)
    dn = normalizing_dn(bbar, profile)
    if l1_log_arg == "b":
        scale = halfwidth_l1(alpha, bbar, profile, log_arg_b=b)
    elif l1_log_arg == "bbar":
        scale = halfwidth_l1(alpha, bbar, profile)
    else:
        raise ValueError("l1_log_arg must be 'b' or 'bbar'")
    return BandCalibration(alpha, "gumbel", dn, z, scale, bbar, l1_log_arg)


def c_beta_quadrature(beta: float) -> float:
    """int_0^inf (x + x^2)^-beta dx / ((3 - 2 beta)(1 - beta)) by quadrature.

    The integral is split at 1; the tail is mapped to (0, 1] by x = 1/t and
    both pieces use QUADPACK's algebraic end-point weight.
    """
    _check_beta(beta)
    head, _ = integrate.quad(lambda x: (1.0 + x) ** -beta, 0.0, 1.0,
                             weight="alg", wvar=(-beta, 0.0), epsabs=1e-14, epsrel=1e-13)
    tail, _ = integrate.quad(lambda t: (1.0 + t) ** -beta, 0.0, 1.0,
                             weight="alg", wvar=(2.0 * beta - 2.0, 0.0),
                             epsabs=1e-14, epsrel=1e-13)
    return (head + tail) / ((3.0 - 2.0 * beta) * (1.0 - beta))


def c_beta_closed_form(beta: float) -> float:
    _check_beta(beta)
    return special.beta(1.0 - beta, 2.0 * beta - 1.0) / ((3.0 - 2.0 * beta) * (1.0 - beta))


def _check_beta(beta):
    if not (0.5 < beta < 1.0):
        raise DomainError(f"long-memory exponent beta must lie in (1/2, 1), got {beta!r}")


def lrd_limit_scale(beta: float, ell: float = 1.0) -> LrdSpec:
    if not ell > 0:
        raise DomainError("slowly varying constant ell must be positive")
    return LrdSpec(beta, float(ell), c_beta_quadrature(beta))


def half_normal_scale(lrd: LrdSpec, profile, f, f_prime, grid) -> float:
    """sqrt(c_beta / lambda_K) * max over grid of |f'| / sqrt(f)."""
    k = get_kernel(profile)
    x = grid.points if hasattr(grid, "points") else np.asarray(grid, dtype=float)
    ratio = np.abs(f_prime(x)) / np.sqrt(f(x))
    return math.sqrt(lrd.c_beta / k.lambda_K) * float(np.max(ratio))


def lrd_normalizer(n: int, b: float, lrd: LrdSpec) -> float:
    """b^(1/2) n^(1 - beta) ell, the large-bandwidth scale of the deviation."""
    return math.sqrt(b) * n ** (1.0 - lrd.beta) * lrd.ell


@dataclass(frozen=True)
class BandwidthDiagnostics:
    n: int
    b: float
    delta1: float
    delta2: float
    lower: float
    upper: float
    c1_holds: bool
    regime: str | None = None
    lrd_scale: float | None = None
    small_threshold: float | None = None
    large_threshold: float | None = None
    note: str = "finite-n heuristic; asymptotic rate conditions cannot be verified at one n"

    def to_dict(self) -> dict:
        return asdict(self)


def check_bandwidth_conditions(n: int, b: float, delta1: float, delta2: float | None = None,
                               lrd: LrdSpec | None = None) -> BandwidthDiagnostics:
    """Evaluate the bandwidth rate conditions as concrete inequalities at this n.

    (C1) is read as n^-delta1 <= b <= n^-delta2. Under long memory the
    regime is ``gumbel`` when b^(1/2) n^(1-beta) ell < log(n)^(-1/2),
    ``half_normal`` when log(n)^(1/2) < b^(1/2) n^(1-beta) ell, and
    ``indeterminate`` in between.
    """
    if n < 2 or not b > 0:
        raise DomainError("need n >= 2 and b > 0")
    if delta2 is None:
        delta2 = delta1
    if not (0 < delta2 <= delta1 < 1):
        raise DomainError("need 0 < delta2 <= delta1 < 1")
    lower, upper = n ** -delta1, n ** -delta2
    rel = 1e-12
    holds = lower * (1 - rel) <= b <= upper * (1 + rel)
    regime = scale = small = large = None
    if lrd is not None:
        scale = lrd_normalizer(n, b, lrd)
        small = math.log(n) ** -0.5
        large = math.log(n) ** 0.5
        if scale < small:
            regime = "gumbel"
        elif scale > large:
            regime = "half_normal"
        else:
            regime = "indeterminate"
    return BandwidthDiagnostics(n, b, delta1, delta2, lower, upper, bool(holds), regime,
                                scale, small, large)
