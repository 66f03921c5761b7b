"""Synthetic stationary processes and linear-process dependence diagnostics.

Every generator takes a ``seed`` (int, ``SeedSequence`` or ``Generator``)
and is deterministic given it. Innovations are standardised to mean 0 and
variance 1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import signal, special, stats

from .asymptotics import _check_beta
from .errors import Diverged, DomainError

INNOVATIONS = ("normal", "uniform_centered", "rademacher")
KINDS = ("iid", "linear", "lrd_linear", "arch", "nonlinear_ar", "diffusion_discrete")
DIVERGENCE_BOUND = 1e6
RECURSIVE_BURN_IN = 1000


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def child_seed(seed, *keys) -> np.random.SeedSequence:
    """Independent stream for (seed, keys...); order- and schedule-free."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + keys)
    return np.random.SeedSequence(seed, spawn_key=keys)


def seed_repr(seed):
    """JSON-friendly description of a seed or seed sequence."""
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
    if isinstance(seed, np.integer):
        return int(seed)
    return seed


def innovations(rng: np.random.Generator, size, law: str = "normal") -> np.ndarray:
    if law == "normal":
        return rng.standard_normal(size)
    if law == "uniform_centered":
        return rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size)
    if law == "rademacher":
        return rng.integers(0, 2, size).astype(float) * 2.0 - 1.0
    raise DomainError(f"unknown innovation law {law!r}; choose one of {INNOVATIONS}")


_SAFE = {name: getattr(np, name) for name in (
    "sin", "cos", "tan", "exp", "log", "sqrt", "abs", "tanh", "arctan", "minimum",
    "maximum", "clip", "where", "pi", "sign", "log1p", "expm1", "cosh", "sinh")}


def make_function(spec) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised function of x from a callable, a constant or an expression string.

    Strings are evaluated with ``x`` and a small set of numpy functions in
    scope (no builtins), e.g. ``"2*(1 - x)"`` or ``"0.3*sqrt(abs(x))"``.
    """
    if callable(spec):
        return spec
    if isinstance(spec, (int, float)):
        c = float(spec)
        return lambda x: np.full(np.shape(x), c) if np.ndim(x) else c
    if isinstance(spec, str):
        code = compile(spec, "<expr>", "eval")
        names = set(code.co_names) - set(_SAFE) - {"x"}
        if names:
            raise DomainError(f"unknown names in expression {spec!r}: {sorted(names)}")

        def fn(x, _code=code):
            x = np.asarray(x, dtype=float)
            out = eval(_code, {"__builtins__": {}}, dict(_SAFE, x=x))  # noqa: S307
            return np.broadcast_to(np.asarray(out, dtype=float), x.shape).copy() \
                if x.ndim else float(out)
        fn.expr = spec
        return fn
    raise DomainError(f"cannot build a function from {spec!r}")


def gen_iid(n: int, innovation: str = "normal", seed=None, loc: float = 0.0,
            scale: float = 1.0) -> np.ndarray:
    rng = make_rng(seed)
    return loc + scale * innovations(rng, n, innovation)


def gen_linear(coeffs, n: int, innovation: str = "normal", seed=None,
               burn_in: int = 0) -> np.ndarray:
    """X_i = sum_j a_j eps_{i-j} for a finite coefficient vector.

    Every returned value uses a full window of innovations, so the output
    is exactly stationary; ``burn_in`` adds further discarded steps.
    """
    a = np.asarray(coeffs, dtype=float)
    if a.ndim != 1 or a.size == 0 or not np.all(np.isfinite(a)):
        raise DomainError("coefficients must be a finite, non-empty 1-d vector")
    rng = make_rng(seed)
    eps = innovations(rng, n + a.size - 1 + burn_in, innovation)
    if a.size > 64:
        out = signal.fftconvolve(eps, a, mode="valid")
    else:
        out = np.convolve(eps, a, mode="valid")
    return out[burn_in:]


def lrd_coefficients(beta: float, ell: float = 1.0, M: int = 1000) -> np.ndarray:
    """a_0 = 1 and a_j = ell j^-beta for 1 <= j <= M."""
    _check_beta(beta)
    a = np.empty(M + 1)
    a[0] = 1.0
    a[1:] = ell * np.arange(1, M + 1, dtype=float) ** -beta
    return a


def lrd_variance_deficit(beta: float, ell: float, M: int) -> float:
    """sum_{j > M} a_j^2, the variance lost by truncating at lag M."""
    return float(ell * ell * special.zeta(2.0 * beta, M + 1))


def gen_lrd(beta: float, ell: float, n: int, M: int | None = None,
            innovation: str = "normal", seed=None) -> np.ndarray:
    """Long-memory linear process truncated at lag M (default 10 n)."""
    _check_beta(beta)
    M = 10 * n if M is None else int(M)
    return gen_linear(lrd_coefficients(beta, ell, M), n, innovation, seed)


def gen_arch(a: float, b: float, n: int, seed=None, innovation: str = "normal",
             burn_in: int = RECURSIVE_BURN_IN) -> np.ndarray:
    """ARCH(1): X_i = eps_i (a^2 + b^2 X_{i-1}^2)^(1/2), started at 0."""
    if not (a > 0 and b > 0):
        raise DomainError("ARCH parameters need a > 0 and b > 0")
    if b >= 1:
        raise DomainError(f"ARCH coefficient b = {b} >= 1 is not second-order stationary")
    rng = make_rng(seed)
    eps = innovations(rng, n + burn_in, innovation)
    x = np.empty(n + burn_in)
    prev = 0.0
    a2, b2 = a * a, b * b
    for i in range(n + burn_in):
        prev = eps[i] * math.sqrt(a2 + b2 * prev * prev)
        x[i] = prev
    return x[burn_in:]


def _scalar_fn(fn):
    # expression strings return floats for scalar input; user callables may
    # return numpy scalars
    return lambda v: float(fn(v))


def gen_nonlinear_ar(mu_fn, sigma_fn, n: int, seed=None, y0: float = 0.0,
                     burn_in: int = RECURSIVE_BURN_IN, innovation: str = "normal"):
    """Y_i = mu(Y_{i-1}) + sigma(Y_{i-1}) eta_i; returns pairs (X_i, Y_i) = (Y_{i-1}, Y_i)."""
    mu, sig = _scalar_fn(make_function(mu_fn)), _scalar_fn(make_function(sigma_fn))
    rng = make_rng(seed)
    eta = innovations(rng, n + burn_in, innovation)
    path = np.empty(n + burn_in + 1)
    path[0] = y = float(y0)
    for i in range(n + burn_in):
        y = mu(y) + sig(y) * eta[i]
        if not abs(y) <= DIVERGENCE_BOUND:
            raise Diverged(f"nonlinear AR path left [-1e6, 1e6] at step {i + 1}")
        path[i + 1] = y
    path = path[burn_in:]
    return path[:-1].copy(), path[1:].copy()


@dataclass
class DiffusionPath:
    rates: np.ndarray
    x: np.ndarray
    y: np.ndarray
    delta: float


def gen_diffusion_discrete(mu_fn, sigma_fn, delta: float, n: int, x0: float, seed=None,
                           innovation: str = "normal", burn_in: int = 0) -> DiffusionPath:
    """Euler path R_{i+1} = R_i + mu(R_i) delta + sigma(R_i) delta^(1/2) eta_i.

    Returns ``n + 1`` rates and the ``n`` regression pairs
    (X_i, Y_i) = (R_i, R_{i+1} - R_i), drift and volatility absorbed.
    """
    if not delta > 0:
        raise DomainError("time step delta must be positive")
    mu, sig = _scalar_fn(make_function(mu_fn)), _scalar_fn(make_function(sigma_fn))
    rng = make_rng(seed)
    eta = innovations(rng, n + burn_in, innovation)
    sq = math.sqrt(delta)
    r = np.empty(n + burn_in + 1)
    r[0] = cur = float(x0)
    for i in range(n + burn_in):
        cur = cur + mu(cur) * delta + sig(cur) * sq * eta[i]
        if not abs(cur) <= DIVERGENCE_BOUND:
            raise Diverged(f"diffusion path left [-1e6, 1e6] at step {i + 1}")
        r[i + 1] = cur
    r = r[burn_in:]
    return DiffusionPath(r, r[:-1].copy(), np.diff(r), delta)


@dataclass
class ProcessModel:
    """Declarative description of a synthetic series.

    ``params`` by kind:

    iid                 loc, scale
    linear              coeffs
    lrd_linear          beta, ell (M via ``truncation``)
    arch                a, b
    nonlinear_ar        mu, sigma, y0 (regression pairs built in)
    diffusion_discrete  mu, sigma, delta, x0

    For the first four kinds, ``response = {"mu": ..., "sigma": ...}`` turns
    the series into regression pairs Y_i = mu(X_i) + sigma(X_i) eta_i with
    independent standard normal eta.
    """

    kind: str
    params: dict = field(default_factory=dict)
    innovation: str = "normal"
    burn_in: int | None = None
    truncation: int | None = None
    response: dict | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown process kind {self.kind!r}; choose one of {KINDS}")
        if self.innovation not in INNOVATIONS:
            raise DomainError(f"unknown innovation law {self.innovation!r}")
        if self.kind == "arch":
            if not (self.params.get("a", 0) > 0 and self.params.get("b", 0) > 0):
                raise DomainError("ARCH parameters need a > 0 and b > 0")
        if self.kind == "lrd_linear":
            _check_beta(self.params.get("beta", 0.0))
        if self.kind in ("linear", "lrd_linear") and self.burn_in is not None \
                and self.truncation is not None and self.burn_in < self.truncation:
            raise DomainError("linear kinds need burn_in >= truncation lag")

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessModel":
        d = dict(d)
        kind = d.pop("kind")
        known = {"innovation", "burn_in", "truncation", "response"}
        kw = {k: d.pop(k) for k in list(d) if k in known}
        params = d.pop("params", {})
        params.update(d)
        return cls(kind, params, **kw)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": _jsonable(self.params),
                "innovation": self.innovation, "burn_in": self.burn_in,
                "truncation": self.truncation, "response": _jsonable(self.response)}

    @property
    def is_regression(self) -> bool:
        return self.kind in ("nonlinear_ar", "diffusion_discrete") or self.response is not None

    def series(self, n: int, seed=None) -> np.ndarray:
        """The X series (regressors for regression designs)."""
        p = self.params
        burn = RECURSIVE_BURN_IN if self.burn_in is None else self.burn_in
        if self.kind == "iid":
            return gen_iid(n, self.innovation, seed, p.get("loc", 0.0), p.get("scale", 1.0))
        if self.kind == "linear":
            return gen_linear(p["coeffs"], n, self.innovation, seed, burn_in=self.burn_in or 0)
        if self.kind == "lrd_linear":
            return gen_lrd(p["beta"], p.get("ell", 1.0), n, self.truncation,
                           self.innovation, seed)
        if self.kind == "arch":
            return gen_arch(p["a"], p["b"], n, seed, self.innovation, burn)
        if self.kind == "nonlinear_ar":
            return self.pairs(n, seed)[0]
        return self.pairs(n, seed)[0]

    def pairs(self, n: int, seed=None) -> tuple[np.ndarray, np.ndarray]:
        """Regression pairs (X_i, Y_i), i = 1..n."""
        p = self.params
        if self.kind == "nonlinear_ar":
            burn = RECURSIVE_BURN_IN if self.burn_in is None else self.burn_in
            return gen_nonlinear_ar(p["mu"], p["sigma"], n, seed, p.get("y0", 0.0), burn,
                                    self.innovation)
        if self.kind == "diffusion_discrete":
            path = gen_diffusion_discrete(p["mu"], p["sigma"], p.get("delta", 1 / 250), n,
                                          p.get("x0", 0.0), seed, self.innovation,
                                          self.burn_in or 0)
            return path.x, path.y
        if self.response is None:
            raise DomainError(f"{self.kind} model has no response; set response=mu/sigma")
        ss = child_seed(seed if seed is not None else 0, 0)
        x = self.series(n, child_seed(ss, 1))
        eta = make_rng(child_seed(ss, 2)).standard_normal(n)
        mu = make_function(self.response.get("mu", 0.0))
        sig = make_function(self.response.get("sigma", 1.0))
        return x, np.asarray(mu(x)) + np.asarray(sig(x)) * eta

    def marginal(self):
        """Closed-form marginal law of X (scipy frozen distribution) when known."""
        p = self.params
        if self.kind == "iid":
            loc, scale = p.get("loc", 0.0), p.get("scale", 1.0)
            if self.innovation == "normal":
                return stats.norm(loc, scale)
            if self.innovation == "uniform_centered":
                w = 2 * math.sqrt(3.0) * scale
                return stats.uniform(loc - w / 2, w)
            return None
        if self.kind in ("linear", "lrd_linear") and self.innovation == "normal":
            if self.kind == "linear":
                var = float(np.sum(np.asarray(p["coeffs"], dtype=float) ** 2))
            else:
                M = self.truncation
                if M is None:
                    return None
                var = float(np.sum(lrd_coefficients(p["beta"], p.get("ell", 1.0), M) ** 2))
            return stats.norm(0.0, math.sqrt(var))
        return None


def _jsonable(obj):
    if obj is None:
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if callable(obj):
        return getattr(obj, "expr", repr(obj))
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def normal_density_derivative(dist):
    """(pdf, pdf') callables for a frozen normal law."""
    mu, sd = dist.mean(), dist.std()
    pdf = dist.pdf
    return pdf, lambda x: -(np.asarray(x) - mu) / sd ** 2 * pdf(x)


@dataclass
class DependenceDiagnostics:
    theta: np.ndarray
    Theta_n: np.ndarray
    Z_n: np.ndarray
    Psi_tail: np.ndarray
    p: float

    def Z_at(self, n: int) -> float:
        return float(self.Z_n[n])


def coupling_norm(p: float, law: str = "normal") -> float:
    """||eps_0 - eps_0'||_p for the standardised innovation law."""
    if law == "normal":
        # eps - eps' ~ N(0, 2)
        return math.sqrt(2.0) * (2 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)) ** (1 / p)
    if law == "uniform_centered":
        c = 2 * math.sqrt(3.0)
        return (2 * c ** p / ((p + 1) * (p + 2))) ** (1 / p)
    if law == "rademacher":
        return (2.0 ** p / 2.0) ** (1 / p)
    raise DomainError(f"unknown innovation law {law!r}")


def dependence_diagnostics(coeffs, p: float = 2.0, innovation: str = "normal",
                           n_max: int | None = None) -> DependenceDiagnostics:
    """Physical dependence measures of a linear process with finite coefficients.

    theta_i = |a_i| ||eps_0 - eps_0'||_{p'} with p' = min(p, 2);
    Theta_n = sum_{i<=n} theta_i^{p'/2};
    Z_n = sum_{k >= -n} (Theta_{n+k} - Theta_k)^2 for n = 0..n_max;
    Psi_tail[n] = (sum_{j >= n} a_j^2)^{1/2}.
    """
    a = np.abs(np.asarray(coeffs, dtype=float))
    L = a.size
    pp = min(p, 2.0)
    theta = a * coupling_norm(pp, innovation)
    Theta = np.cumsum(theta ** (pp / 2))
    n_max = L if n_max is None else int(n_max)
    # Theta_j for j in [-n_max, L - 2 + n_max]; zero below 0, flat beyond L - 1
    idx = np.arange(-n_max, L - 1 + n_max)
    th = np.where(idx < 0, 0.0, Theta[np.clip(idx, 0, L - 1)])
    Z = np.zeros(n_max + 1)
    for n in range(1, n_max + 1):
        ks = np.arange(-n, L - 1)
        d = th[ks + n + n_max] - th[ks + n_max]
        Z[n] = float(np.sum(d * d))
    tail = np.cumsum((a ** 2)[::-1])[::-1]
    return DependenceDiagnostics(theta, Theta, Z, np.sqrt(tail), p)


def decay_exponent(values, lags) -> float:
    """Least-squares slope of log(values) on log(lags)."""
    lv, ll = np.log(np.asarray(values, dtype=float)), np.log(np.asarray(lags, dtype=float))
    return float(np.polyfit(ll, lv, 1)[0])
