"""Simultaneous confidence bands for densities, regression and variance functions.

Every band has the form ``center +- multiplier * scale(x)``. With the
``gumbel`` method the multiplier is the asymptotic constant l1 and ``scale``
carries the full standard-error factor; with the ``simulated`` method the
multiplier is a simulated Pi_n quantile and ``scale`` is the remaining
plug-in weight (sigma(x)/f(x)^(1/2) for regression).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import BandCalibration, calibrate_gumbel, gumbel_quantile, normalizing_dn
from .calibration import PiSample, eta_sampler, simulate_pi_n, smoothed_bootstrap_sampler
from .errors import DensityTooSmall, DomainError, EmptyWindow, InvariantViolation
from .estimators import (
    CurveEstimate, EvaluationGrid, bias_correction_mu, bias_correction_sigma, kde,
    kde_derivative, kde_second_derivative, local_poly_fit, nadaraya_watson, residuals,
    variance_estimate,
)
from .kernels import get_kernel
from .processes import child_seed

METHODS = ("gumbel", "simulated")
SIGMA2_FLOOR = 1e-12
MAX_EXT_POINTS = 20000


@dataclass
class SimultaneousBand:
    grid: EvaluationGrid
    center: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    method: str
    multiplier: float
    scale: np.ndarray
    target: str
    bandwidth: float
    kernel: str
    n: int
    calibration: BandCalibration
    pi_sample: PiSample | None = None
    curves: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m = self.grid.m
        if not (self.center.shape == self.lower.shape == self.upper.shape == (m,)):
            raise InvariantViolation("band arrays do not match the grid length")
        ok = (self.lower <= self.center) & (self.center <= self.upper)
        if not ok.all():
            i = int(np.argmin(ok))
            raise InvariantViolation(
                f"band sandwich lower <= center <= upper fails at x={self.grid.points[i]:.6g}")

    @property
    def x(self) -> np.ndarray:
        return self.grid.points

    @property
    def halfwidth(self) -> np.ndarray:
        return self.multiplier * self.scale

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, curve) -> bool:
        return gof_test(self, curve).contained

    def to_dict(self) -> dict:
        cal = self.calibration.to_dict()
        out = {
            "target": self.target,
            "level": self.level,
            "method": self.method,
            "bandwidth": self.bandwidth,
            "kernel": self.kernel,
            "n": self.n,
            "multiplier": self.multiplier,
            "grid": self.grid.to_dict(),
            "calibration": cal,
            "x": self.x.tolist(),
            "center": self.center.tolist(),
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "meta": _plain(self.meta),
        }
        if self.pi_sample is not None:
            out["pi_sample"] = self.pi_sample.summary()
        return out


def _plain(d):
    if isinstance(d, dict):
        return {k: _plain(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_plain(v) for v in d]
    if isinstance(d, np.generic):
        return d.item()
    if isinstance(d, np.ndarray):
        return d.tolist()
    return d


@dataclass
class GofResult:
    hypothesis: str
    contained: bool
    max_violation: float
    violation_argmax: float
    level: float
    params: list | None = None

    @property
    def rejected(self) -> bool:
        return not self.contained

    def to_dict(self) -> dict:
        return {
            "hypothesis": self.hypothesis,
            "contained": self.contained,
            "rejected": not self.contained,
            "max_violation": self.max_violation,
            "violation_argmax": self.violation_argmax,
            "level": self.level,
            "params": self.params,
        }


def _check_method(method):
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")


def _check_interval(interval, lo=None, hi=None):
    l, u = map(float, interval)
    if not l < u:
        raise DomainError(f"interval needs l < u, got [{l}, {u}]")
    if lo is not None and not (lo <= l and u <= hi):
        raise DomainError(
            f"interval [{l:g}, {u:g}] is not inside the data range [{lo:g}, {hi:g}]")
    return l, u


def _grid_for(interval, b, grid):
    if grid is None:
        return EvaluationGrid.default(interval[0], interval[1], b)
    if abs(grid.l - interval[0]) > 1e-12 or abs(grid.u - interval[1]) > 1e-12:
        raise ValueError("band grid must span exactly the band interval")
    return grid


def _floor(interval, f_min):
    return 0.01 / (interval[1] - interval[0]) if f_min is None else f_min


def _require_density(f: CurveEstimate, floor: float):
    bad = ~(f.values >= floor)
    if bad.any():
        i = int(np.argmax(bad))
        raise DensityTooSmall(
            f"density estimate {f.values[i]:.3g} below floor {floor:.3g} at x={f.x[i]:.6g}")


def _simulated_pi(data, b, grid, kernel, f_curve, alpha, reps, seed, eta, floor):
    sampler = smoothed_bootstrap_sampler(data, b, kernel)
    return simulate_pi_n(sampler, eta_sampler(eta), len(data), b, grid, kernel, f_curve,
                         reps, seed, level=alpha, f_min=floor)


def _simulated_calibration(alpha, b, interval, kernel, pi: PiSample) -> BandCalibration:
    bbar = b / (interval[1] - interval[0])
    try:
        dn = normalizing_dn(bbar, kernel)
    except Exception:
        dn = float("nan")
    q = pi.cutoff if pi.level == alpha else pi.cutoff_at(alpha)
    return BandCalibration(alpha, "simulated", dn, gumbel_quantile(alpha), q, bbar)


def _warn_small_nb(n, b, meta):
    if n * b < 50:
        msg = f"n*b = {n * b:.3g} < 50; asymptotic band may be unreliable"
        warnings.warn(msg, stacklevel=3)
        meta.setdefault("warnings", []).append(msg)


def _resolve_multiplier(method, alpha, b, interval, kernel, l1_log_arg, pi_sample, data,
                        grid, f_curve, reps, seed, eta, floor):
    if method == "gumbel":
        cal = calibrate_gumbel(alpha, b, interval, kernel, l1_log_arg)
        return cal.halfwidth_scale, cal, None
    if pi_sample is None:
        pi_sample = _simulated_pi(data, b, grid, kernel, f_curve, alpha, reps,
                                  child_seed(seed, 99), eta, floor)
    cal = _simulated_calibration(alpha, b, interval, kernel, pi_sample)
    return cal.halfwidth_scale, cal, pi_sample


def scb_density(data, b: float, interval, alpha: float = 0.05, kernel="epanechnikov",
                method: str = "gumbel", *, grid: EvaluationGrid | None = None,
                reps: int = 1000, seed: int = 0, eta: str = "normal",
                pi_sample: PiSample | None = None, clip: bool = True,
                bias_correct: bool = False, deriv_bandwidth: float | None = None,
                f_min: float | None = None, l1_log_arg: str = "bbar") -> SimultaneousBand:
    """Band for the marginal density over ``interval``.

    Halfwidth is l1 (lambda_K f_n(x) / (n b))^(1/2) for the gumbel method and
    q f_n(x)^(1/2) with a simulated cutoff q otherwise. The center is f_n
    unless ``bias_correct`` subtracts b^2 psi_K f''.
    """
    _check_method(method)
    data = np.asarray(data, dtype=float)
    interval = _check_interval(interval)
    k = get_kernel(kernel)
    grid = _grid_for(interval, b, grid)
    n = data.size
    meta: dict = {}
    _warn_small_nb(n, b, meta)
    f = kde(data, b, grid, k)
    floor = _floor(interval, f_min)
    _require_density(f, floor)
    center = f.values.copy()
    curves = {"f_n": f.values}
    if bias_correct:
        bd = 2 * b if deriv_bandwidth is None else deriv_bandwidth
        f2 = kde_second_derivative(data, bd, grid, k)
        corr = b * b * k.psi_K * f2.values
        center = center - corr
        curves["bias"] = corr
    mult, cal, pi = _resolve_multiplier(method, alpha, b, interval, k, l1_log_arg, pi_sample,
                                        data, grid, f, reps, seed, eta, floor)
    if method == "gumbel":
        scale = np.sqrt(k.lambda_K * f.values / (n * b))
    else:
        scale = np.sqrt(f.values)
    lower = center - mult * scale
    upper = center + mult * scale
    if clip:
        lower = np.where(center >= 0, np.maximum(lower, 0.0), lower)
    return SimultaneousBand(grid, center, lower, upper, alpha, method, mult, scale, "density",
                            b, k.name, n, cal, pi, curves, meta)


def _regression_center(x, y, b, grid, k, bias_correct, deriv_bw, floor, interval, strict):
    mu = nadaraya_watson(x, y, b, grid, k)
    curves = {"mu_n": mu.values}
    if not bias_correct:
        return mu.values.copy(), mu.failed.copy(), curves
    f = kde(x, b, grid, k)
    f1 = kde_derivative(x, deriv_bw, grid, k)
    mu1 = local_poly_fit(x, y, deriv_bw, grid, degree=2, deriv_order=1, kernel=k)
    mu2 = local_poly_fit(x, y, deriv_bw, grid, degree=3, deriv_order=2, kernel=k)
    if strict:
        mu1.require_ok(*interval, exc=EmptyWindow)
        mu2.require_ok(*interval, exc=EmptyWindow)
    bias = bias_correction_mu(mu1, mu2, f, f1, b, k.psi_K, f_min=floor,
                              on_small="raise" if strict else "zero",
                              interval=interval if strict else None)
    curves.update(bias=bias.values, mu1=mu1.values, mu2=mu2.values)
    return mu.values - bias.values, mu.failed | bias.failed, curves


def scb_regression(x, y, b: float, interval, alpha: float = 0.05, kernel="epanechnikov",
                   method: str = "gumbel", *, grid: EvaluationGrid | None = None,
                   h: float | None = None, deriv_bandwidth: float | None = None,
                   bias_correct: bool = True, reps: int = 1000, seed: int = 0,
                   eta: str = "normal", pi_sample: PiSample | None = None,
                   sigma_hat=None, f_min: float | None = None,
                   l1_log_arg: str = "bbar") -> SimultaneousBand:
    """Band for the regression function mu over ``interval``.

    Center: Nadaraya-Watson estimate minus b^2 psi_K rho_mu, with mu', mu''
    from local polynomials and f' from the differentiated kde, all at the
    derivative bandwidth (default 2b). sigma(x) is the square root of the
    kernel regression of squared residuals Y - center(X) at bandwidth h
    (default b).

    ``sigma_hat`` (scalar or array on the grid) overrides the variance
    estimate; meant for tests.
    """
    _check_method(method)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    k = get_kernel(kernel)
    interval = _check_interval(interval, float(np.min(x)), float(np.max(x)))
    grid = _grid_for(interval, b, grid)
    h = b if h is None else h
    bd = 2 * b if deriv_bandwidth is None else deriv_bandwidth
    n = x.size
    meta: dict = {"h": h, "deriv_bandwidth": bd, "bias_correct": bias_correct}
    _warn_small_nb(n, b, meta)
    floor = _floor(interval, f_min)

    f = kde(x, b, grid, k)
    _require_density(f, floor)
    center, failed, curves = _regression_center(x, y, b, grid, k, bias_correct, bd, floor,
                                                interval, strict=True)
    if failed.any():
        raise EmptyWindow(f"regression estimate undefined at {failed.sum()} grid point(s)")
    curves["f_n"] = f.values

    res = None
    if sigma_hat is None:
        # residuals at every observation, so later density weights see the full sample
        lo, hi = float(np.min(x)), float(np.max(x))
        m_ext = min(MAX_EXT_POINTS, max(2, math.ceil((hi - lo) / grid.spacing) + 1))
        ext = EvaluationGrid(lo, hi, m_ext)
        ext_center, ext_failed, _ = _regression_center(x, y, b, ext, k, bias_correct, bd,
                                                       floor, interval, strict=False)
        ext_curve = CurveEstimate(ext, np.where(ext_failed, np.nan, ext_center), "regression",
                                  b, n, failed=ext_failed | ~np.isfinite(ext_center))
        res = residuals(x, y, ext_curve)
        s2 = variance_estimate(res.x, res.values ** 2, h, grid, k)
        s2.require_ok(*interval)
        sigma2 = np.maximum(s2.values, SIGMA2_FLOOR)
        meta.update(residuals_dropped=res.dropped, variance_clipped=s2.meta["clipped"])
    else:
        sigma2 = np.broadcast_to(np.asarray(sigma_hat, dtype=float) ** 2, (grid.m,)).copy()
    sigma = np.sqrt(sigma2)
    curves["sigma2"] = sigma2

    mult, cal, pi = _resolve_multiplier(method, alpha, b, interval, k, l1_log_arg, pi_sample,
                                        x, grid, f, reps, seed, eta, floor)
    if method == "gumbel":
        scale = sigma * np.sqrt(k.lambda_K / (n * b * f.values))
    else:
        scale = sigma / np.sqrt(f.values)
    band = SimultaneousBand(grid, center, center - mult * scale, center + mult * scale, alpha,
                            method, mult, scale, "regression", b, k.name, n, cal, pi, curves,
                            meta)
    band.residuals = res
    return band


def estimate_nu_eta(x, resid, sigma2_curve: CurveEstimate, interval) -> float:
    """Fourth moment of standardised residuals minus one, over the interval."""
    x = np.asarray(x, dtype=float)
    inside = (x >= interval[0]) & (x <= interval[1])
    s2 = sigma2_curve.interpolate(x[inside])
    ok = np.isfinite(s2) & (s2 > SIGMA2_FLOOR)
    z = np.asarray(resid, dtype=float)[inside][ok] / np.sqrt(s2[ok])
    if z.size == 0:
        raise EmptyWindow("no residuals inside the interval to estimate the fourth moment")
    return float(np.mean(z ** 4) - 1.0)


def scb_volatility(x, resid, h: float, interval, alpha: float = 0.05, kernel="epanechnikov",
                   method: str = "gumbel", nu_eta: float | None = None, *,
                   eta_law: str | None = None, grid: EvaluationGrid | None = None,
                   deriv_bandwidth: float | None = None, bias_correct: bool = True,
                   reps: int = 1000, seed: int = 0, eta: str = "normal",
                   pi_sample: PiSample | None = None, f_min: float | None = None,
                   l1_log_arg: str = "bbar", design=None) -> SimultaneousBand:
    """Band for the conditional variance sigma^2 over ``interval``.

    ``resid`` are regression residuals at ``x``. Center: sigma_n^2 minus
    h^2 psi_K rho_sigma (floored at 0). Halfwidth is
    l1 sigma_n^2 (lambda_K nu / (n h f_n1))^(1/2) for the gumbel method and
    q nu^(1/2) sigma_n^2 / f_n1^(1/2) otherwise. ``nu`` is E eta^4 - 1:
    given directly, 2 when ``eta_law='normal'``, else estimated.

    ``design`` is the full regressor sample when some observations have no
    residual; f_n1 and n are then taken from it rather than from ``x``.
    """
    _check_method(method)
    x = np.asarray(x, dtype=float)
    r = np.asarray(resid, dtype=float)
    k = get_kernel(kernel)
    interval = _check_interval(interval, float(np.min(x)), float(np.max(x)))
    grid = _grid_for(interval, h, grid)
    bd = 2 * h if deriv_bandwidth is None else deriv_bandwidth
    xd = x if design is None else np.asarray(design, dtype=float)
    n = xd.size
    meta: dict = {"deriv_bandwidth": bd, "bias_correct": bias_correct,
                  "residuals_missing": int(n - x.size)}
    _warn_small_nb(n, h, meta)
    floor = _floor(interval, f_min)
    r2 = r * r

    f1 = kde(xd, h, grid, k, kind="density_h")
    _require_density(f1, floor)
    s2 = variance_estimate(x, r2, h, grid, k)
    s2.require_ok(*interval)
    raw = s2.values
    center = raw.copy()
    curves = {"sigma2_n": raw, "f_n1": f1.values}
    if bias_correct:
        fd = kde_derivative(xd, bd, grid, k)
        d1 = local_poly_fit(x, r2, bd, grid, degree=2, deriv_order=1, kernel=k)
        d2 = local_poly_fit(x, r2, bd, grid, degree=3, deriv_order=2, kernel=k)
        d1.require_ok(*interval)
        d2.require_ok(*interval)
        bias = bias_correction_sigma(d1, d2, fd, f1, h, k.psi_K, f_min=floor,
                                     interval=interval)
        center = center - bias.values
        curves["bias"] = bias.values
    negative = center < 0
    if negative.any():
        msg = f"variance center negative at {negative.sum()} grid point(s); floored at 0"
        warnings.warn(msg, stacklevel=2)
        meta["negative_center"] = int(negative.sum())
        center = np.maximum(center, 0.0)

    if nu_eta is None:
        if eta_law == "normal":
            nu_eta = 2.0
        else:
            nu_eta = estimate_nu_eta(x, r, s2, interval)
            meta["nu_eta_estimated"] = True
    if not nu_eta > 0:
        raise DomainError(f"nu_eta = {nu_eta!r} must be positive")
    meta["nu_eta"] = float(nu_eta)

    mult, cal, pi = _resolve_multiplier(method, alpha, h, interval, k, l1_log_arg, pi_sample,
                                        xd, grid, f1, reps, seed, eta, floor)
    plug = np.maximum(raw, SIGMA2_FLOOR)
    if method == "gumbel":
        scale = plug * np.sqrt(k.lambda_K * nu_eta / (n * h * f1.values))
    else:
        scale = math.sqrt(nu_eta) * plug / np.sqrt(f1.values)
    lower = np.minimum(center - mult * scale, center)
    upper = center + mult * scale
    return SimultaneousBand(grid, center, lower, upper, alpha, method, mult, scale, "variance",
                            h, k.name, n, cal, pi, curves, meta)


FAMILIES = {"constant": 0, "affine": 1, "linear": 1, "quadratic": 2, "cubic": 3}


def fit_family(family: str, x, y, interval) -> np.ndarray:
    """Ordinary least squares polynomial fit on pairs with x inside ``interval``.

    Returns coefficients in increasing degree order.
    """
    if family.startswith("poly:"):
        deg = int(family.split(":", 1)[1])
    elif family in FAMILIES:
        deg = FAMILIES[family]
    else:
        raise ValueError(f"unknown family {family!r}; choose {sorted(FAMILIES)} or 'poly:k'")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = (x >= interval[0]) & (x <= interval[1])
    if inside.sum() <= deg:
        raise DomainError(f"not enough data in the interval to fit a degree-{deg} family")
    design = np.vander(x[inside], deg + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(design, y[inside], rcond=None)
    return coef


def gof_test(band: SimultaneousBand, candidate, *, x=None, y=None) -> GofResult:
    """Is the candidate curve inside the band at every grid point?

    ``candidate`` may be an array on the band grid, a :class:`CurveEstimate`,
    a callable of x, or a family name (``"affine"``, ``"quadratic"``,
    ``"poly:k"`` ...) fitted by least squares to (x, y) on the band interval.
    """
    pts = band.x
    params = None
    if isinstance(candidate, str):
        if x is None or y is None:
            raise ValueError("family candidates need the data (x, y) for fitting")
        coef = fit_family(candidate, x, y, (band.grid.l, band.grid.u))
        values = np.polynomial.polynomial.polyval(pts, coef)
        params = coef.tolist()
        label = f"{candidate} family (OLS fit)"
    elif isinstance(candidate, CurveEstimate):
        values, label = candidate.values, f"{candidate.kind} curve"
    elif callable(candidate):
        values = np.broadcast_to(np.asarray(candidate(pts), dtype=float), pts.shape)
        label = getattr(candidate, "expr", getattr(candidate, "__name__", "function"))
    else:
        values = np.broadcast_to(np.asarray(candidate, dtype=float), pts.shape)
        label = "curve"
    excess = np.maximum(np.maximum(band.lower - values, values - band.upper), 0.0)
    excess = np.where(np.isfinite(excess), excess, np.inf)
    i = int(np.argmax(excess))
    worst = float(excess[i])
    return GofResult(label, worst == 0.0, worst, float(pts[i]), band.level, params)
