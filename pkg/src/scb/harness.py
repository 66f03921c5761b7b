"""Monte Carlo experiments: band coverage, Gumbel convergence, LRD dichotomy."""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .asymptotics import (
    gumbel_cdf, half_normal_scale, lrd_limit_scale, lrd_normalizer, normalizing_dn,
)
from .bands import gof_test, scb_density, scb_regression, scb_volatility
from .calibration import eta_sampler, simulate_pi_n, smoothed_bootstrap_sampler
from .errors import DomainError, InvalidReps, ScbError
from .estimators import EvaluationGrid, kde
from .kernels import get_kernel
from .processes import ProcessModel, child_seed, make_function, normal_density_derivative

TARGETS = ("density", "regression", "variance")
MIN_VALID = 0.95
PILOT_KEY = 1_000_003


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    reps: int
    seed: int
    statistics: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def to_dict(self, with_statistics: bool = True) -> dict:
        out = {"kind": self.kind, "config": self.config, "reps": self.reps, "seed": self.seed,
               "summary": self.summary, "wall_time": self.wall_time}
        if with_statistics:
            out["statistics"] = {k: np.asarray(v).tolist() for k, v in self.statistics.items()}
        return out

    def render_text(self) -> str:
        lines = [f"{self.kind} experiment  reps={self.reps}  seed={self.seed}"]
        for k, v in _flatten(self.summary):
            if isinstance(v, float):
                v = f"{v:.6g}"
            lines.append(f"  {k:<36} {v}")
        lines.append(f"  {'wall_time_s':<36} {self.wall_time:.2f}")
        return "\n".join(lines)


def _flatten(d, prefix=""):
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, key + ".")
        else:
            yield key, v


def _as_model(model) -> ProcessModel:
    return model if isinstance(model, ProcessModel) else ProcessModel.from_dict(model)


def ks_distance(sample, cdf) -> float:
    """Kolmogorov-Smirnov distance between a sample's empirical cdf and ``cdf``."""
    return float(stats.kstest(np.asarray(sample, dtype=float), cdf).statistic)


def _draw(model: ProcessModel, target, n, seed):
    if target == "density":
        return model.series(n, seed), None
    return model.pairs(n, seed)


def _build_band(target, x, y, cfg, kernel, pi_sample, seed):
    common = dict(alpha=cfg["alpha"], kernel=kernel, method=cfg["method"],
                  pi_sample=pi_sample, seed=seed, reps=cfg["pi_reps"], eta=cfg["eta"])
    if target == "density":
        return scb_density(x, cfg["b"], cfg["interval"], bias_correct=cfg["bias_correct"],
                           **common)
    reg = scb_regression(x, y, cfg["b"], cfg["interval"], h=cfg["h"],
                         bias_correct=cfg["bias_correct"], **common)
    if target == "regression":
        return reg
    res = reg.residuals
    return scb_volatility(res.x, res.values, cfg["h"], cfg["interval"], nu_eta=cfg["nu_eta"],
                          eta_law=cfg["eta_law"], bias_correct=cfg["bias_correct"], design=x,
                          **common)


def _pilot_pi(target, x, cfg, kernel, seed):
    bw = cfg["b"] if target != "variance" else cfg["h"]
    grid = EvaluationGrid.default(cfg["interval"][0], cfg["interval"][1], bw)
    f = kde(x, bw, grid, kernel)
    sampler = smoothed_bootstrap_sampler(x, bw, kernel)
    return simulate_pi_n(sampler, eta_sampler(cfg["eta"]), len(x), bw, grid, kernel, f,
                         cfg["pi_reps"], seed, level=cfg["alpha"])


def band_config(n: int, b: float, interval, alpha: float = 0.05, kernel="epanechnikov",
                method: str = "simulated", *, h: float | None = None, pi_reps: int = 1000,
                eta: str = "normal", bias_correct: bool | None = None,
                nu_eta: float | None = None, eta_law: str | None = None,
                pilot: bool = True) -> dict:
    """Band settings shared by every replicate of a coverage experiment.

    With ``pilot`` (default) the simulated cutoff is drawn once from the
    first replicate's smoothed bootstrap and reused for all replicates.
    """
    return {"n": int(n), "b": float(b), "interval": [float(interval[0]), float(interval[1])],
            "alpha": float(alpha), "kernel": get_kernel(kernel).name, "method": method,
            "h": float(b if h is None else h), "pi_reps": int(pi_reps), "eta": eta,
            "bias_correct": bias_correct, "nu_eta": nu_eta, "eta_law": eta_law,
            "pilot": bool(pilot)}


def coverage_experiment(model, target: str, truth, band: dict, reps: int, seed: int
                        ) -> ExperimentReport:
    """Fraction of replicates whose band contains ``truth`` on the whole grid.

    ``truth`` is a callable or expression string in x. Replicates raising a
    package error are marked invalid and excluded from the rate.
    """
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}")
    if reps < 50:
        raise InvalidReps(f"coverage experiments need reps >= 50, got {reps}")
    model = _as_model(model)
    if target != "density" and not model.is_regression:
        raise DomainError(f"target {target!r} needs a regression model")
    cfg = dict(band)
    if cfg.get("bias_correct") is None:
        cfg["bias_correct"] = target != "density"
    kernel = get_kernel(cfg["kernel"])
    truth_fn = make_function(truth)
    t0 = time.perf_counter()
    n = cfg["n"]

    pi = None
    if cfg["method"] == "simulated" and cfg.get("pilot", True):
        x0, _ = _draw(model, target, n, child_seed(seed, PILOT_KEY))
        pi = _pilot_pi(target, x0, cfg, kernel, child_seed(seed, PILOT_KEY, 1))

    covered = np.zeros(reps, dtype=bool)
    valid = np.ones(reps, dtype=bool)
    violation = np.full(reps, np.nan)
    multiplier = np.full(reps, np.nan)
    errors: dict[str, int] = {}
    for r in range(reps):
        try:
            x, y = _draw(model, target, n, child_seed(seed, r))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                bd = _build_band(target, x, y, cfg, kernel, pi, child_seed(seed, r, 1))
            g = gof_test(bd, truth_fn)
        except ScbError as exc:
            valid[r] = False
            errors[type(exc).__name__] = errors.get(type(exc).__name__, 0) + 1
            continue
        covered[r] = g.contained
        violation[r] = g.max_violation
        multiplier[r] = bd.multiplier
    nv = int(valid.sum())
    rate = float(covered[valid].mean()) if nv else float("nan")
    summary = {
        "coverage": rate,
        "std_error": math.sqrt(rate * (1 - rate) / nv) if nv else float("nan"),
        "nominal": 1 - cfg["alpha"],
        "valid": nv,
        "valid_fraction": nv / reps,
        "enough_valid": nv / reps >= MIN_VALID,
        "invalid_by_error": errors,
        "mean_multiplier": float(np.nanmean(multiplier)) if nv else float("nan"),
    }
    if pi is not None:
        summary["pilot_cutoff"] = pi.cutoff
    if nv / reps < MIN_VALID:
        warnings.warn(f"only {nv}/{reps} coverage replicates valid", stacklevel=2)
    config = {"model": model.to_dict(), "target": target,
              "truth": getattr(truth_fn, "expr", repr(truth)), "band": cfg}
    return ExperimentReport("coverage", config, reps, _seed_int(seed),
                            {"covered": covered, "valid": valid, "max_violation": violation},
                            summary, time.perf_counter() - t0)


def _seed_int(seed):
    return int(seed) if isinstance(seed, (int, np.integer)) else seed


def exact_kde_mean(dist, b: float, points, kernel="epanechnikov", nodes: int = 64):
    """E f_n(x) = int K(v) f(x - b v) dv by Gauss-Legendre quadrature.

    The kernel support is split at its breakpoints so every panel has a
    smooth integrand.
    """
    k = get_kernel(kernel)
    edges = np.unique(np.concatenate([[-k.A, k.A], np.asarray(k.breakpoints, float)]))
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    pts = np.asarray(points, dtype=float)
    total = np.zeros_like(pts)
    for a, c in zip(edges[:-1], edges[1:]):
        v = 0.5 * (c - a) * gx + 0.5 * (a + c)
        w = 0.5 * (c - a) * gw * k.evaluate(v)
        total += (dist.pdf(pts[:, None] - b * v[None, :]) * w).sum(axis=1)
    return total


def max_deviation(data, b, grid, kernel, center, f_true) -> float:
    """sup over the grid of (n b / (lambda_K f))^(1/2) |f_n - center|."""
    k = get_kernel(kernel)
    fn = kde(data, b, grid, k).values
    n = len(data)
    return float(np.max(np.sqrt(n * b / (k.lambda_K * f_true)) * np.abs(fn - center)))


def _deviation_sample(model, n, b, grid, kernel, center, f_true, reps, seed):
    out = np.empty(reps)
    for r in range(reps):
        out[r] = max_deviation(model.series(n, child_seed(seed, r)), b, grid, kernel, center,
                               f_true)
    return out


def gumbel_convergence_experiment(model, n: int, b: float, interval, kernel="epanechnikov",
                                  reps: int = 1000, centering: str = "exact_mean",
                                  seed: int = 0, grid: EvaluationGrid | None = None
                                  ) -> ExperimentReport:
    """KS distance of the normalized maximum deviation to exp(-2 exp(-z)).

    Each replicate's statistic is (2 log 1/bbar)^(1/2) (Delta_n - d_n) with
    the true marginal density in the weight. ``centering`` is ``exact_mean``
    (E f_n by quadrature) or ``true_f``.
    """
    model = _as_model(model)
    if centering not in ("exact_mean", "true_f"):
        raise ValueError("centering must be 'exact_mean' or 'true_f'")
    dist = model.marginal()
    if dist is None:
        raise DomainError(f"{model.kind} model has no closed-form marginal density")
    k = get_kernel(kernel)
    l, u = map(float, interval)
    bbar = b / (u - l)
    dn = normalizing_dn(bbar, k)
    root = math.sqrt(2 * math.log(1 / bbar))
    grid = EvaluationGrid.default(l, u, b) if grid is None else grid
    f_true = dist.pdf(grid.points)
    center = exact_kde_mean(dist, b, grid.points, k) if centering == "exact_mean" else f_true
    t0 = time.perf_counter()
    delta = _deviation_sample(model, n, b, grid, k, center, f_true, reps, seed)
    z = root * (delta - dn)
    ks = ks_distance(z, gumbel_cdf)
    qs = (0.1, 0.5, 0.9, 0.95)
    summary = {
        "ks_gumbel": ks,
        "d_n": dn,
        "mean_z": float(np.mean(z)),
        "quantiles": {str(q): float(np.quantile(z, q)) for q in qs},
        "gumbel_quantiles": {str(q): float(-math.log(-0.5 * math.log(q))) for q in qs},
    }
    config = {"model": model.to_dict(), "n": int(n), "b": float(b), "interval": [l, u],
              "kernel": k.name, "centering": centering, "grid": grid.to_dict()}
    return ExperimentReport("gumbel", config, reps, _seed_int(seed), {"z": z}, summary,
                            time.perf_counter() - t0)


def bandwidth_from_rule(rule, n: int) -> float:
    """A bandwidth rule is a number (used as is) or ``{"exponent": d, "const": c}``
    meaning c * n^(-d)."""
    if isinstance(rule, (int, float)):
        return float(rule)
    return float(rule.get("const", 1.0)) * n ** (-float(rule["exponent"]))


def dichotomy_experiment(beta: float, regimes, n: int, reps: int, seed: int,
                         interval=(-1.0, 1.0), kernel="epanechnikov", ell: float = 1.0,
                         truncation: int | None = None) -> ExperimentReport:
    """Compare Gumbel and half-normal fits of Delta_n under long memory.

    For each bandwidth rule the deviation sample is normalised two ways:
    (2 log 1/bbar)^(1/2) (Delta_n - d_n) against exp(-2 exp(-z)), and
    Delta_n / (b^(1/2) n^(1-beta) ell) against |N(0, s^2)| with the
    half-normal scale s. The law with smaller KS distance is declared closer.
    """
    lrd = lrd_limit_scale(beta, ell)
    M = 10 * n if truncation is None else int(truncation)
    model = ProcessModel("lrd_linear", {"beta": beta, "ell": ell}, truncation=M)
    dist = model.marginal()
    f, fp = normal_density_derivative(dist)
    k = get_kernel(kernel)
    l, u = map(float, interval)
    t0 = time.perf_counter()
    results, stats_out = {}, {}
    for i, rule in enumerate(regimes):
        b = bandwidth_from_rule(rule, n)
        bbar = b / (u - l)
        grid = EvaluationGrid.default(l, u, b)
        f_true = f(grid.points)
        center = exact_kde_mean(dist, b, grid.points, k)
        # the same seed for every rule: paired comparison across bandwidths
        delta = _deviation_sample(model, n, b, grid, k, center, f_true, reps, seed)
        dn = normalizing_dn(bbar, k)
        z = math.sqrt(2 * math.log(1 / bbar)) * (delta - dn)
        scale = half_normal_scale(lrd, k, f, fp, grid)
        w = delta / lrd_normalizer(n, b, lrd)
        ks_g = ks_distance(z, gumbel_cdf)
        ks_h = ks_distance(w, stats.halfnorm(scale=scale).cdf)
        label = f"rule{i}"
        results[label] = {
            "rule": rule, "b": b, "ks_gumbel": ks_g, "ks_half_normal": ks_h,
            "closer": "gumbel" if ks_g < ks_h else "half_normal",
            "half_normal_scale": scale, "lrd_normalizer": lrd_normalizer(n, b, lrd),
        }
        stats_out[f"{label}.delta"] = delta
    config = {"beta": beta, "ell": ell, "n": int(n), "truncation": M,
              "regimes": list(regimes), "interval": [l, u], "kernel": k.name,
              "c_beta": lrd.c_beta, "marginal_sd": float(dist.std())}
    return ExperimentReport("dichotomy", config, reps, _seed_int(seed), stats_out, results,
                            time.perf_counter() - t0)


def run_experiment(kind: str, config: dict) -> ExperimentReport:
    """Dispatch an experiment from a JSON-style config (used by the CLI)."""
    c = dict(config)
    seed = c.pop("seed", 0)
    if kind == "coverage":
        band = c["band"]
        if "n" in band:
            band = band_config(**band)
        return coverage_experiment(c["model"], c["target"], c["truth"], band, c["reps"], seed)
    if kind == "gumbel":
        n = c["n"]
        return gumbel_convergence_experiment(
            c["model"], n, bandwidth_from_rule(c["b"], n), c["interval"],
            c.get("kernel", "epanechnikov"), c.get("reps", 1000),
            c.get("centering", "exact_mean"), seed)
    if kind == "dichotomy":
        return dichotomy_experiment(c["beta"], c["regimes"], c["n"], c.get("reps", 500), seed,
                                    c.get("interval", (-1.0, 1.0)),
                                    c.get("kernel", "epanechnikov"), c.get("ell", 1.0),
                                    c.get("truncation"))
    raise ValueError(f"unknown experiment {kind!r}; choose coverage, gumbel or dichotomy")
