"""Kernel curve estimators evaluated on a uniform grid.

All estimators share one inner loop, :func:`kernel_sums`, which evaluates
``sum_k K((X_k - t) / b) w_k`` for a block of grid points at a time after
restricting the data to the window that can reach the block. The summation
order per grid point is fixed, so results do not depend on chunking.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DensityTooSmall, EmptyData, EmptyWindow, SingularFit
from .kernels import KernelProfile, get_kernel

_CHUNK_ELEMS = 2_000_000

KINDS = {"density", "density_h", "regression", "variance",
         "derivative1", "derivative2", "bias"}


@dataclass(frozen=True)
class EvaluationGrid:
    """``m`` equally spaced points from ``l`` to ``u`` inclusive."""

    l: float
    u: float
    m: int

    def __post_init__(self):
        if not (math.isfinite(self.l) and math.isfinite(self.u)) or not self.l < self.u:
            raise ValueError(f"grid needs l < u, got [{self.l}, {self.u}]")
        if int(self.m) != self.m or self.m < 2:
            raise ValueError(f"grid needs at least 2 points, got {self.m}")

    @classmethod
    def default(cls, l: float, u: float, b: float) -> "EvaluationGrid":
        """Spacing at most b/10 and never fewer than 201 points."""
        return cls(float(l), float(u), max(201, math.ceil(10.0 * (u - l) / b)))

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.l, self.u, self.m)

    @property
    def spacing(self) -> float:
        return (self.u - self.l) / (self.m - 1)

    @property
    def length(self) -> float:
        return self.u - self.l

    def refine(self, factor: int = 2) -> "EvaluationGrid":
        """Finer grid that contains every point of this one."""
        return EvaluationGrid(self.l, self.u, (self.m - 1) * factor + 1)

    def shift(self, c: float) -> "EvaluationGrid":
        return EvaluationGrid(self.l + c, self.u + c, self.m)

    def inside(self, l: float, u: float) -> np.ndarray:
        p = self.points
        eps = 1e-12 * max(1.0, abs(l), abs(u))
        return (p >= l - eps) & (p <= u + eps)

    def to_dict(self) -> dict:
        return {"l": self.l, "u": self.u, "m": self.m}


@dataclass
class CurveEstimate:
    grid: EvaluationGrid
    values: np.ndarray
    kind: str
    bandwidth: float
    n: int
    failed: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.m,):
            raise ValueError("curve length does not match its grid")
        if self.kind not in KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if self.failed is None:
            self.failed = np.zeros(self.grid.m, dtype=bool)

    @property
    def x(self) -> np.ndarray:
        return self.grid.points

    @property
    def n_failed(self) -> int:
        return int(self.failed.sum())

    def require_ok(self, l: float | None = None, u: float | None = None, exc=EmptyWindow):
        """Raise ``exc`` if any grid point inside [l, u] failed."""
        mask = self.failed
        if l is not None:
            mask = mask & self.grid.inside(l, u)
        if mask.any():
            bad = self.grid.points[mask]
            raise exc(
                f"{self.kind} estimate undefined at {mask.sum()} grid point(s), "
                f"first at x={bad[0]:.6g}"
            )
        return self

    def interpolate(self, x) -> np.ndarray:
        """Linear interpolation; NaN outside the grid or next to failed points."""
        x = np.asarray(x, dtype=float)
        p = self.grid.points
        out = np.interp(x, p, self.values)
        out[(x < p[0]) | (x > p[-1])] = np.nan
        if self.failed.any():
            idx = np.clip(np.searchsorted(p, x, side="right") - 1, 0, p.size - 2)
            bad = self.failed[idx] | self.failed[idx + 1]
            out[bad] = np.nan
        return out

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "bandwidth": self.bandwidth,
            "n": self.n,
            "grid": self.grid.to_dict(),
            "x": self.grid.points.tolist(),
            "values": [None if not np.isfinite(v) else float(v) for v in self.values],
            "meta": dict(self.meta),
        }


@dataclass(frozen=True)
class SupStatistic:
    value: float
    argmax: float
    grid: EvaluationGrid


def _as_grid(grid, b=None) -> EvaluationGrid:
    if isinstance(grid, EvaluationGrid):
        return grid
    l, u = grid
    return EvaluationGrid.default(l, u, b)


def _check_bandwidth(b):
    if not (b > 0 and math.isfinite(b)):
        raise ValueError(f"bandwidth must be positive, got {b!r}")


def kernel_sums(
    x: np.ndarray,
    t: np.ndarray,
    b: float,
    kernel: KernelProfile,
    weights: np.ndarray | None = None,
    fn: Callable | None = None,
    powers: int = 0,
) -> np.ndarray:
    """Kernel-weighted sums at every point of ``t``.

    Returns an array of shape ``(len(t), powers + 1, p)`` whose entry
    ``[i, j, c]`` is ``sum_k fn(U_ik) U_ik**j w_kc`` with
    ``U_ik = (x_k - t_i) / b``. ``weights`` defaults to a single column of
    ones; ``fn`` defaults to the kernel itself.
    """
    fn = kernel.func if fn is None else fn
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    if weights is None:
        w = np.ones((xs.size, 1))
    else:
        w = np.asarray(weights, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        w = w[order]
    t = np.asarray(t, dtype=float)
    out = np.zeros((t.size, powers + 1, w.shape[1]))
    reach = kernel.A * b
    block = int(np.clip(_CHUNK_ELEMS // max(xs.size, 1), 1, 256))
    if t.size > 1:
        # keep each block about one kernel window wide to limit wasted evaluations
        span = np.max(np.diff(t)) if t.size > 1 else 0.0
        if span > 0:
            block = max(1, min(block, int(2 * reach / span) + 1))
    for start in range(0, t.size, block):
        stop = min(start + block, t.size)
        lo = np.searchsorted(xs, t[start] - reach, side="left")
        hi = np.searchsorted(xs, t[stop - 1] + reach, side="right")
        if hi <= lo:
            continue
        u = (xs[None, lo:hi] - t[start:stop, None]) / b
        kv = fn(u)
        ws = w[lo:hi]
        out[start:stop, 0, :] = kv @ ws
        for j in range(1, powers + 1):
            kv = kv * u
            out[start:stop, j, :] = kv @ ws
    return out


def kde(data, b: float, grid, kernel="epanechnikov", kind: str = "density") -> CurveEstimate:
    """Kernel density estimate (nb)^-1 sum_k K((X_k - x)/b) on ``grid``."""
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise EmptyData("kernel density estimate needs at least one observation")
    _check_bandwidth(b)
    kernel = get_kernel(kernel)
    grid = _as_grid(grid, b)
    s = kernel_sums(data, grid.points, b, kernel)[:, 0, 0]
    return CurveEstimate(grid, s / (data.size * b), kind, b, data.size)


def kde_derivative(data, b: float, grid, kernel="epanechnikov") -> CurveEstimate:
    """Exact x-derivative of :func:`kde`: -(n b^2)^-1 sum_k K'((X_k - x)/b)."""
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise EmptyData("density derivative needs at least one observation")
    _check_bandwidth(b)
    kernel = get_kernel(kernel)
    grid = _as_grid(grid, b)
    s = kernel_sums(data, grid.points, b, kernel, fn=kernel.deriv)[:, 0, 0]
    return CurveEstimate(grid, -s / (data.size * b * b), "derivative1", b, data.size)


def kde_second_derivative(data, b: float, grid, kernel="epanechnikov") -> CurveEstimate:
    """Second derivative of the kde by central differences of its derivative.

    Step b/100; the kde derivative is evaluated exactly at the shifted points.
    """
    kernel = get_kernel(kernel)
    grid = _as_grid(grid, b)
    step = b / 100.0
    hi = kde_derivative(data, b, grid.shift(step), kernel).values
    lo = kde_derivative(data, b, grid.shift(-step), kernel).values
    return CurveEstimate(grid, (hi - lo) / (2 * step), "derivative2", b, len(data))


def _paired(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if x.size == 0:
        raise EmptyData("regression needs at least one pair")
    return x, y


def nadaraya_watson(x, y, b: float, grid, kernel="epanechnikov",
                    kind: str = "regression") -> CurveEstimate:
    """Nadaraya-Watson regression of ``y`` on ``x``.

    Grid points whose kernel window holds no data are marked in
    ``failed`` (value NaN) rather than raising; callers decide whether the
    failure matters on their interval.
    """
    x, y = _paired(x, y)
    _check_bandwidth(b)
    kernel = get_kernel(kernel)
    grid = _as_grid(grid, b)
    s = kernel_sums(x, grid.points, b, kernel, weights=np.column_stack([np.ones_like(y), y]))
    den, num = s[:, 0, 0], s[:, 0, 1]
    failed = den <= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(failed, np.nan, num / np.where(failed, 1.0, den))
    return CurveEstimate(grid, values, kind, b, x.size, failed=failed,
                         meta={"empty_windows": int(failed.sum())})


def local_poly_fit(x, y, b: float, grid, degree: int | None = None, deriv_order: int = 0,
                   kernel="epanechnikov") -> CurveEstimate:
    """Kernel-weighted local polynomial fit; returns the ``deriv_order``-th derivative.

    ``degree`` defaults to ``deriv_order + 1``. Rank-deficient local fits
    (fewer than ``degree + 1`` points in the window, or a numerically
    singular design) are flagged per grid point.
    """
    x, y = _paired(x, y)
    _check_bandwidth(b)
    if degree is None:
        degree = deriv_order + 1
    if deriv_order < 0 or degree < deriv_order:
        raise ValueError("need 0 <= deriv_order <= degree")
    if x.size <= degree + 1:
        raise SingularFit(f"local polynomial of degree {degree} needs more than "
                          f"{degree + 1} observations, got {x.size}")
    kernel = get_kernel(kernel)
    grid = _as_grid(grid, b)
    p = degree
    s = kernel_sums(x, grid.points, b, kernel,
                    weights=np.column_stack([np.ones_like(y), y]), powers=2 * p)
    moments, cross = s[:, :, 0], s[:, : p + 1, 1]
    idx = np.add.outer(np.arange(p + 1), np.arange(p + 1))
    gram = moments[:, idx]
    xs = np.sort(x)
    t = grid.points
    counts = (np.searchsorted(xs, t + kernel.A * b, side="right")
              - np.searchsorted(xs, t - kernel.A * b, side="left"))
    scale = np.abs(gram).max(axis=(1, 2))
    failed = counts < p + 1
    cond = np.full(grid.m, np.inf)
    ok = ~failed & (scale > 0)
    if ok.any():
        cond[ok] = np.linalg.cond(gram[ok])
    failed |= ~(cond < 1e12)
    coef = np.full((grid.m, p + 1), np.nan)
    good = ~failed
    if good.any():
        coef[good] = np.linalg.solve(gram[good], cross[good][..., None])[..., 0]
    r = deriv_order
    values = math.factorial(r) * coef[:, r] / b ** r
    kind = {0: "regression", 1: "derivative1", 2: "derivative2"}.get(r, "derivative2")
    return CurveEstimate(grid, values, kind, b, x.size, failed=failed,
                         meta={"degree": p, "deriv_order": r, "singular": int(failed.sum())})


@dataclass
class ResidualSet:
    x: np.ndarray
    values: np.ndarray
    kept: np.ndarray
    dropped: int


def residuals(x, y, mu_curve: CurveEstimate) -> ResidualSet:
    """Residuals Y_k - mu(X_k) with mu linearly interpolated from the curve.

    Observations outside the curve's grid (or next to a failed grid point)
    are dropped and counted.
    """
    x, y = _paired(x, y)
    fitted = mu_curve.interpolate(x)
    kept = np.isfinite(fitted)
    return ResidualSet(x[kept], y[kept] - fitted[kept], kept, int((~kept).sum()))


def variance_estimate(x, squared_residuals, h: float, grid, kernel="epanechnikov") -> CurveEstimate:
    """Conditional variance: Nadaraya-Watson regression of squared residuals."""
    est = nadaraya_watson(x, squared_residuals, h, grid, kernel)
    neg = np.isfinite(est.values) & (est.values < 0)
    est.values = np.where(neg, 0.0, est.values)
    est.kind = "variance"
    est.meta["clipped"] = int(neg.sum())
    return est


def default_f_min(grid: EvaluationGrid) -> float:
    return 0.01 / grid.length


def _density_ratio(f: CurveEstimate, f1: CurveEstimate, f_min, on_small, interval):
    if f_min is None:
        f_min = default_f_min(f.grid) if interval is None else 0.01 / (interval[1] - interval[0])
    small = ~(f.values >= f_min)
    if interval is not None:
        check = small & f.grid.inside(*interval)
    else:
        check = small
    if check.any() and on_small == "raise":
        where = f.grid.points[check][0]
        raise DensityTooSmall(
            f"density estimate {f.values[check][0]:.3g} below floor {f_min:.3g} at x={where:.6g}"
        )
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(small, 0.0, f1.values / np.where(small, 1.0, f.values))
    return ratio, small


def _same_grid(*curves):
    g = curves[0].grid
    for c in curves[1:]:
        if c.grid != g:
            raise ValueError("curves must share one evaluation grid")
    return g


def _bias_curve(d1, d2, f, f1, bw, psi_K, f_min, on_small, interval, label):
    grid = _same_grid(d1, d2, f, f1)
    ratio, small = _density_ratio(f, f1, f_min, on_small, interval)
    rho = d2.values + 2.0 * d1.values * ratio
    vals = bw * bw * psi_K * rho
    failed = d1.failed | d2.failed | f.failed | f1.failed
    if on_small == "zero":
        vals = np.where(small | failed, 0.0, vals)
        failed = np.zeros_like(failed)
    return CurveEstimate(grid, vals, "bias", bw, f.n, failed=failed,
                         meta={"target": label, "density_floor_hits": int(small.sum())})


def bias_correction_mu(mu1: CurveEstimate, mu2: CurveEstimate, f: CurveEstimate,
                       f1: CurveEstimate, b: float, psi_K: float, f_min: float | None = None,
                       on_small: str = "raise", interval=None) -> CurveEstimate:
    """b^2 psi_K (mu'' + 2 mu' f'/f), the leading bias of the regression estimate.

    ``on_small='zero'`` returns a zero correction where the density is below
    the floor instead of raising (used away from the band interval).
    """
    return _bias_curve(mu1, mu2, f, f1, b, psi_K, f_min, on_small, interval, "regression")


def bias_correction_sigma(sigma2_d1: CurveEstimate, sigma2_d2: CurveEstimate,
                          f_d1: CurveEstimate, f: CurveEstimate, h: float, psi_K: float,
                          f_min: float | None = None, on_small: str = "raise",
                          interval=None) -> CurveEstimate:
    """h^2 psi_K ((s2)'' + 2 (s2)' f'/f) with s2 the conditional variance."""
    return _bias_curve(sigma2_d1, sigma2_d2, f, f_d1, h, psi_K, f_min, on_small, interval,
                       "variance")


def _curve_values(c, grid):
    if isinstance(c, CurveEstimate):
        if c.grid != grid:
            raise ValueError("curves must share one evaluation grid")
        return c.values
    if callable(c):
        return np.asarray(c(grid.points), dtype=float)
    arr = np.asarray(c, dtype=float)
    if arr.ndim == 0:
        return np.full(grid.m, float(arr))
    if arr.shape != (grid.m,):
        raise ValueError("curve length does not match the grid")
    return arr


def sup_weighted_deviation(curve_a, curve_b, weight=1.0, grid: EvaluationGrid | None = None
                           ) -> SupStatistic:
    """max over the grid of weight(x) |A(x) - B(x)| and where it is attained.

    Any argument may be a :class:`CurveEstimate`, an array on the grid, a
    callable of x, or a constant; ``grid`` is needed only when no argument
    is a curve.
    """
    if grid is None:
        for c in (curve_a, curve_b, weight):
            if isinstance(c, CurveEstimate):
                grid = c.grid
                break
        else:
            raise ValueError("a grid is needed when no argument is a CurveEstimate")
    a = _curve_values(curve_a, grid)
    bb = _curve_values(curve_b, grid)
    w = _curve_values(weight, grid)
    dev = w * np.abs(a - bb)
    if not np.all(np.isfinite(dev)):
        raise EmptyWindow("weighted deviation is undefined at some grid points")
    i = int(np.argmax(dev))
    return SupStatistic(float(dev[i]), float(grid.points[i]), grid)
