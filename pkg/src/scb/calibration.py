"""Simulation-based band cutoffs.

The cutoff of a band is the (1 - alpha) quantile of

    Pi_n = sup_{x in T} |sum_k K((X*_k - x)/b) eta*_k| / (n b f(x)^(1/2))

over many replicates, where X*_k are i.i.d. draws from a density f and
eta*_k are independent standardised multipliers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DensityTooSmall, EmptyData, InvalidReps
from .estimators import CurveEstimate, EvaluationGrid, default_f_min, kernel_sums
from .kernels import KernelProfile, get_kernel
from .processes import child_seed, innovations, make_rng, seed_repr

MIN_REPS = 100


def quantile(values, level: float) -> float:
    """Upper order statistic: the ceil(len * level)-th smallest value (1-based)."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise EmptyData("quantile of an empty sample")
    if not (0.0 < level < 1.0):
        raise ValueError(f"quantile level must lie in (0, 1), got {level!r}")
    # guard against products like 100 * 0.95 = 95.00000000000001
    k = math.ceil(v.size * level - 1e-9)
    return float(v[min(max(k, 1), v.size) - 1])


class SmoothedBootstrap:
    """Sampler for the kernel density estimate of ``data``.

    A draw is X_J + b V with J uniform over the observations and V from the
    kernel density, so draws have exactly the kde as their density.
    """

    def __init__(self, data, b: float, kernel="epanechnikov", seed=None):
        self.data = np.asarray(data, dtype=float)
        if self.data.size == 0:
            raise EmptyData("smoothed bootstrap needs data")
        self.b = float(b)
        self.kernel = get_kernel(kernel)
        self._rng = make_rng(seed)
        self.name = f"smoothed_bootstrap(b={self.b:g}, kernel={self.kernel.name})"

    def __call__(self, size, rng: np.random.Generator | None = None) -> np.ndarray:
        rng = self._rng if rng is None else rng
        j = rng.integers(0, self.data.size, size)
        return self.data[j] + self.b * self.kernel.sample(rng, size)


def smoothed_bootstrap_sampler(data, b, kernel="epanechnikov", seed=None) -> SmoothedBootstrap:
    return SmoothedBootstrap(data, b, kernel, seed)


class DistributionSampler:
    """Wrap a scipy frozen distribution as an ``f_sampler``."""

    def __init__(self, dist, name: str | None = None):
        self.dist = dist
        self.name = name or f"{dist.dist.name}{dist.args}"

    def __call__(self, size, rng: np.random.Generator | None = None):
        return self.dist.rvs(size=size, random_state=rng)


class EtaSampler:
    def __init__(self, law: str = "normal"):
        if law not in ("normal", "rademacher", "zero"):
            raise ValueError(f"unknown multiplier law {law!r}")
        self.name = law

    def __call__(self, size, rng: np.random.Generator):
        if self.name == "zero":
            return np.zeros(size)
        return innovations(rng, size, self.name)


def eta_sampler(law: str = "normal") -> EtaSampler:
    """Standard normal, Rademacher, or the degenerate zero law (tests only)."""
    return EtaSampler(law)


@dataclass
class PiSample:
    values: np.ndarray
    reps: int
    level: float
    cutoff: float
    seed: int | None
    config: dict = field(default_factory=dict)

    def cutoff_at(self, level: float) -> float:
        return quantile(self.values, 1.0 - level)

    def summary(self) -> dict:
        v = self.values
        return {
            "reps": self.reps,
            "level": self.level,
            "cutoff": self.cutoff,
            "seed": seed_repr(self.seed),
            "mean": float(np.mean(v)),
            "sd": float(np.std(v, ddof=1)) if v.size > 1 else 0.0,
            "quantiles": {str(q): quantile(v, q) for q in (0.5, 0.9, 0.95, 0.99)},
            "config": dict(self.config),
        }


def pi_statistic(xs: np.ndarray, eta: np.ndarray, b: float, grid: EvaluationGrid,
                 kernel: KernelProfile, sqrt_f: np.ndarray) -> float:
    s = kernel_sums(xs, grid.points, b, kernel, weights=eta)[:, 0, 0]
    return float(np.max(np.abs(s) / sqrt_f)) / (xs.size * b)


def simulate_pi_n(f_sampler, eta_sampler_, n: int, b: float, grid: EvaluationGrid,
                  kernel, f_curve: CurveEstimate | np.ndarray, reps: int, seed: int,
                  level: float = 0.05, f_min: float | None = None) -> PiSample:
    """Draw ``reps`` replicates of Pi_n on ``grid`` with weight f_curve^(1/2).

    Replicate ``r`` uses its own stream derived from (seed, r), so the
    sample does not depend on evaluation order.
    """
    if not isinstance(reps, (int, np.integer)) or reps < MIN_REPS:
        raise InvalidReps(f"need at least {MIN_REPS} replicates, got {reps!r}")
    kernel = get_kernel(kernel)
    fv = f_curve.values if isinstance(f_curve, CurveEstimate) else np.asarray(f_curve, float)
    if fv.shape != (grid.m,):
        raise ValueError("f_curve must be evaluated on the Pi_n grid")
    floor = default_f_min(grid) if f_min is None else f_min
    if not np.all(fv >= floor) or not np.all(fv > 0):
        i = int(np.argmin(np.where(np.isfinite(fv), fv, -np.inf)))
        raise DensityTooSmall(
            f"weight density {fv[i]:.3g} below floor {floor:.3g} at x={grid.points[i]:.6g}")
    sqrt_f = np.sqrt(fv)
    values = np.empty(reps)
    for r in range(reps):
        rng = make_rng(child_seed(seed, r))
        xs = np.asarray(f_sampler(n, rng), dtype=float)
        eta = np.asarray(eta_sampler_(n, rng), dtype=float)
        values[r] = pi_statistic(xs, eta, b, grid, kernel, sqrt_f)
    config = {
        "n": int(n), "b": float(b), "kernel": kernel.name, "grid": grid.to_dict(),
        "f_sampler": getattr(f_sampler, "name", repr(f_sampler)),
        "eta_sampler": getattr(eta_sampler_, "name", repr(eta_sampler_)),
    }
    return PiSample(values, reps, level, quantile(values, 1.0 - level), seed, config)
