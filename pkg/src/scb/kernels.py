"""Compactly supported kernels and their band-calibration constants.

Every kernel is described by a :class:`KernelProfile` holding the kernel
function on its support ``[-A, A]`` together with the constants that enter
the maximum-deviation normalisation:

``lambda_K``  integral of K^2
``K1``        [K^2(-A) + K^2(A)] / (2 lambda_K)
``K2``        integral of K'^2 / (2 lambda_K)
``psi_K``     integral of u^2 K(u) / 2
``alpha, C0`` local expansion r(s) = 1 - C0 |s|^alpha + o(|s|^alpha) of the
              normalised kernel autocorrelation; (1, K1) when K1 > 0 and
              (2, K2) otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import NotAKernel

QUAD_TOL = 1e-12
DERIV_STEP = 1e-5

ArrayFunc = Callable[[np.ndarray], np.ndarray]


def _support(u, A):
    u = np.asarray(u, dtype=float)
    return u, np.abs(u) <= A


def _epanechnikov(u):
    u = np.asarray(u, dtype=float)
    return 0.75 * np.maximum(1.0 - u * u, 0.0)


def _epanechnikov_d(u):
    u, inside = _support(u, 1.0)
    return np.where(inside, -1.5 * u, 0.0)


def _epanechnikov_cdf(u):
    u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
    return 0.5 + 0.75 * u - 0.25 * u ** 3


def _epanechnikov_ppf(p):
    # root in [-1, 1] of u^3 - 3u + (4p - 2) = 0
    theta = np.arccos(np.clip(1.0 - 2.0 * np.asarray(p, dtype=float), -1.0, 1.0))
    return 2.0 * np.cos(theta / 3.0 - 2.0 * np.pi / 3.0)


def _rect(u):
    u, inside = _support(u, 1.0)
    return np.where(inside, 0.5, 0.0)


def _rect_d(u):
    return np.zeros_like(np.asarray(u, dtype=float))


def _rect_cdf(u):
    u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
    return 0.5 * (u + 1.0)


def _rect_ppf(p):
    return 2.0 * np.asarray(p, dtype=float) - 1.0


def _triangular(u):
    return np.maximum(1.0 - np.abs(np.asarray(u, dtype=float)), 0.0)


def _triangular_d(u):
    u, inside = _support(u, 1.0)
    return np.where(inside, -np.sign(u), 0.0)


def _triangular_cdf(u):
    u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
    return np.where(u <= 0, 0.5 * (1.0 + u) ** 2, 1.0 - 0.5 * (1.0 - u) ** 2)


def _triangular_ppf(p):
    p = np.asarray(p, dtype=float)
    return np.where(p <= 0.5, np.sqrt(2.0 * p) - 1.0, 1.0 - np.sqrt(2.0 * (1.0 - p)))


def _quartic(u):
    u = np.asarray(u, dtype=float)
    return 15.0 / 16.0 * np.maximum(1.0 - u * u, 0.0) ** 2


def _quartic_d(u):
    u, inside = _support(u, 1.0)
    return np.where(inside, -3.75 * u * (1.0 - u * u), 0.0)


def _quartic_cdf(u):
    u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
    return 0.5 + 15.0 / 16.0 * (u - 2.0 * u ** 3 / 3.0 + u ** 5 / 5.0)


@dataclass(frozen=True)
class KernelProfile:
    """A compact kernel with its derived constants.

    Instances are immutable. ``evaluate``/``derivative`` are vectorised and
    return exactly zero outside ``[-A, A]``.
    """

    name: str
    A: float
    func: ArrayFunc = field(repr=False, compare=False)
    deriv: ArrayFunc = field(repr=False, compare=False)
    lambda_K: float
    K1: float
    K2: float
    psi_K: float
    alpha: int
    C0: float
    cdf: ArrayFunc | None = field(default=None, repr=False, compare=False)
    breakpoints: tuple[float, ...] = ()
    ppf_exact: ArrayFunc | None = field(default=None, repr=False, compare=False)
    _ppf_table: tuple[np.ndarray, np.ndarray] | None = field(
        default=None, init=False, repr=False, compare=False
    )

    def __post_init__(self):
        if self.cdf is None:
            u = np.linspace(-self.A, self.A, 20001)
            c = integrate.cumulative_trapezoid(self.func(u), u, initial=0.0)
            c /= c[-1]
            object.__setattr__(self, "_ppf_table", (c, u))
        else:
            u = np.linspace(-self.A, self.A, 4001)
            object.__setattr__(self, "_ppf_table", (self.cdf(u), u))

    def evaluate(self, u):
        return self.func(u)

    __call__ = evaluate

    def derivative(self, u):
        return self.deriv(u)

    def ppf(self, p):
        """Inverse CDF of the kernel viewed as a probability density."""
        if self.ppf_exact is not None:
            return self.ppf_exact(p)
        p = np.asarray(p, dtype=float)
        c, u = self._ppf_table
        x = np.interp(p, c, u)
        if self.cdf is not None:
            # Newton polish; the table gives a start within one cell
            for _ in range(3):
                dens = self.func(x)
                ok = dens > 1e-8
                step = np.where(ok, (self.cdf(x) - p) / np.where(ok, dens, 1.0), 0.0)
                x = np.clip(x - step, -self.A, self.A)
        return x

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return self.ppf(rng.random(size))

    def scaled(self, c: float) -> "KernelProfile":
        """The kernel (1/c) K(u/c), constants recomputed by quadrature."""
        f, d = self.func, self.deriv
        return compute_kernel_constants(
            lambda u: f(np.asarray(u) / c) / c,
            A=self.A * c,
            name=f"{self.name}*{c:g}",
            derivative=lambda u: d(np.asarray(u) / c) / (c * c),
            breakpoints=tuple(c * p for p in self.breakpoints),
        )


def _from_constants(name, func, deriv, cdf, lam, k1, k2, psi, breakpoints=(), ppf=None):
    alpha, c0 = (1, k1) if k1 > 0 else (2, k2)
    return KernelProfile(
        name=name, A=1.0, func=func, deriv=deriv, lambda_K=lam, K1=k1, K2=k2,
        psi_K=psi, alpha=alpha, C0=c0, cdf=cdf, breakpoints=tuple(breakpoints),
        ppf_exact=ppf,
    )


BUILTIN = {
    "epanechnikov": lambda: _from_constants(
        "epanechnikov", _epanechnikov, _epanechnikov_d, _epanechnikov_cdf,
        0.6, 0.0, 1.25, 0.1, ppf=_epanechnikov_ppf),
    "rect": lambda: _from_constants(
        "rect", _rect, _rect_d, _rect_cdf, 0.5, 0.5, 0.0, 1.0 / 6.0, ppf=_rect_ppf),
    "triangular": lambda: _from_constants(
        "triangular", _triangular, _triangular_d, _triangular_cdf,
        2.0 / 3.0, 0.0, 1.5, 1.0 / 12.0, breakpoints=(0.0,), ppf=_triangular_ppf),
    "quartic": lambda: _from_constants(
        "quartic", _quartic, _quartic_d, _quartic_cdf,
        5.0 / 7.0, 0.0, 1.5, 1.0 / 14.0),
}

ALIASES = {
    "epa": "epanechnikov",
    "rectangular": "rect",
    "uniform": "rect",
    "box": "rect",
    "triangle": "triangular",
    "biweight": "quartic",
}

_UNBOUNDED = {"gaussian", "normal", "logistic", "cauchy", "sigmoid"}

_cache: dict[str, KernelProfile] = {}


def get_kernel(name: str | KernelProfile = "epanechnikov") -> KernelProfile:
    """Return a built-in kernel by name (closed-form constants)."""
    if isinstance(name, KernelProfile):
        return name
    key = ALIASES.get(name.lower(), name.lower())
    if key in _UNBOUNDED:
        raise NotAKernel(
            f"kernel {name!r} has unbounded support; choose one of "
            f"{sorted(BUILTIN)} (compact support is required)"
        )
    if key not in BUILTIN:
        raise NotAKernel(f"unknown kernel {name!r}; choose one of {sorted(BUILTIN)}")
    if key not in _cache:
        _cache[key] = BUILTIN[key]()
    return _cache[key]


def eval_kernel(profile: KernelProfile, u):
    """K(u); exactly zero outside the support."""
    out = profile.func(u)
    return float(out) if np.ndim(out) == 0 else out


def _quad(fn, a, b, points=()):
    pts = [p for p in points if a < p < b]
    val, _ = integrate.quad(
        fn, a, b, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=500,
        points=pts or None,
    )
    return val


def _panel_integral(fn, nodes):
    # 3-point Gauss-Legendre per panel: exact for the piecewise polynomials
    # (degree <= 3) produced by a linearly interpolated table
    x, w = np.polynomial.legendre.leggauss(3)
    a, b = nodes[:-1, None], nodes[1:, None]
    t = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    return float(np.sum(0.5 * (b - a) * w[None, :] * fn(t)))


def _central_diff(func, A, h=DERIV_STEP):
    # one-sided near the support edges so the stencil never leaves [-A, A]
    def d(u):
        u = np.asarray(u, dtype=float)
        lo = np.maximum(u - h, -A)
        hi = np.minimum(u + h, A)
        diff = (func(hi) - func(lo)) / np.where(hi > lo, hi - lo, 1.0)
        return np.where(np.abs(u) <= A, diff, 0.0)
    return d


def compute_kernel_constants(
    kernel_definition,
    A: float | None = None,
    *,
    name: str | None = None,
    derivative: ArrayFunc | None = None,
    breakpoints: Sequence[float] = (),
    tol: float = 1e-9,
) -> KernelProfile:
    """Build a :class:`KernelProfile` with constants from adaptive quadrature.

    ``kernel_definition`` may be

    * a built-in name -- constants are recomputed by quadrature (use
      :func:`get_kernel` for the closed forms);
    * a vectorised callable together with the support radius ``A``;
    * a pair ``(u, k)`` of sampled values, linearly interpolated, with
      ``A = max |u|``.

    Derivative constants use ``derivative`` when given, otherwise central
    differences with step 1e-5 (tables use exact segment slopes).
    """
    table_slopes = None
    if isinstance(kernel_definition, str):
        base = get_kernel(kernel_definition)
        func, A = base.func, base.A
        derivative = base.deriv
        breakpoints = base.breakpoints
        name = name or base.name
    elif callable(kernel_definition):
        if A is None or A <= 0:
            raise NotAKernel("a callable kernel needs a positive support radius A")
        user = kernel_definition
        A = float(A)

        def func(u, _f=user, _A=A):
            u = np.asarray(u, dtype=float)
            return np.where(np.abs(u) <= _A, _f(u), 0.0)
    else:
        try:
            u_tab, k_tab = (np.asarray(v, dtype=float) for v in kernel_definition)
        except (TypeError, ValueError) as exc:
            raise NotAKernel("kernel must be a name, a callable or a (u, K) table") from exc
        order = np.argsort(u_tab)
        u_tab, k_tab = u_tab[order], k_tab[order]
        if u_tab.size < 2 or np.any(np.diff(u_tab) <= 0):
            raise NotAKernel("kernel table needs at least two distinct abscissae")
        A = float(max(abs(u_tab[0]), abs(u_tab[-1])))
        if np.any(k_tab < 0):
            raise NotAKernel("kernel table has negative values")

        def func(u, _u=u_tab, _k=k_tab):
            return np.interp(np.asarray(u, dtype=float), _u, _k, left=0.0, right=0.0)

        table_slopes = (np.diff(k_tab) / np.diff(u_tab), np.diff(u_tab))
        breakpoints = tuple(u_tab[1:-1])
        if derivative is None:
            def derivative(u, _u=u_tab, _s=table_slopes[0]):
                u = np.asarray(u, dtype=float)
                idx = np.clip(np.searchsorted(_u, u, side="right") - 1, 0, _s.size - 1)
                inside = (u > _u[0]) & (u < _u[-1])
                return np.where(inside, _s[idx], 0.0)
    name = name or "custom"

    probe = func(np.linspace(-A, A, 4001))
    if np.any(probe < 0):
        raise NotAKernel(f"kernel {name!r} is negative somewhere on its support")
    if table_slopes is not None:
        integral = lambda g: _panel_integral(g, u_tab)  # noqa: E731
    else:
        integral = lambda g: _quad(lambda t: float(g(t)), -A, A, breakpoints)  # noqa: E731
    mass = integral(func)
    if abs(mass - 1.0) > tol:
        raise NotAKernel(f"kernel {name!r} integrates to {mass!r}, not 1")

    lam = integral(lambda t: func(t) ** 2)
    psi = integral(lambda t: t * t * func(t)) / 2.0
    k1 = (float(func(-A)) ** 2 + float(func(A)) ** 2) / (2.0 * lam)
    if table_slopes is not None:
        slopes, widths = table_slopes
        k2 = float(np.sum(slopes ** 2 * widths)) / (2.0 * lam)
    else:
        if derivative is None:
            derivative = _central_diff(func, A)
        d = derivative
        k2 = _quad(lambda t: float(d(t)) ** 2, -A, A, breakpoints) / (2.0 * lam)
    if k1 < 1e-14:
        k1 = 0.0
    alpha, c0 = (1, k1) if k1 > 0 else (2, k2)
    return KernelProfile(
        name=name, A=A, func=func, deriv=derivative, lambda_K=lam, K1=k1, K2=k2,
        psi_K=psi, alpha=alpha, C0=c0, cdf=None, breakpoints=tuple(breakpoints),
    )


def kernel_autocorr(profile: KernelProfile, s: float) -> float:
    """Normalised autocorrelation r(s) = int K(x) K(x+s) dx / lambda_K."""
    s = abs(float(s))
    A = profile.A
    if s >= 2 * A:
        return 0.0
    f = profile.func
    pts = list(profile.breakpoints) + [p - s for p in profile.breakpoints] + [A - s]
    val = _quad(lambda x: float(f(x)) * float(f(x + s)), -A, A - s, pts)
    return val / profile.lambda_K
