import json
import math

import numpy as np
import pytest
from scipy import integrate, stats

from scb.errors import BandwidthTooLarge, DomainError, InvalidReps
from scb.harness import (
    band_config, bandwidth_from_rule, coverage_experiment, dichotomy_experiment,
    exact_kde_mean, gumbel_convergence_experiment, ks_distance, run_experiment,
)
from scb.processes import ProcessModel

IID = ProcessModel("iid")
REG = {"kind": "linear", "coeffs": [0.5 ** j for j in range(20)],
       "response": {"mu": "x**2", "sigma": 0.5}}


def test_exact_kde_mean_matches_quad():
    dist = stats.norm()
    pts = np.array([-1.0, 0.0, 0.7])
    for kname in ("epanechnikov", "triangular", "rect"):
        from scb.kernels import get_kernel
        k = get_kernel(kname)
        want = [integrate.quad(lambda v: k.evaluate(np.array([v]))[0] * dist.pdf(x - 0.3 * v),
                               -1, 1, points=[0])[0] for x in pts]
        assert np.allclose(exact_kde_mean(dist, 0.3, pts, kname), want, atol=1e-13)


def test_ks_distance_bounds():
    z = np.random.default_rng(0).standard_normal(500)
    d = ks_distance(z, stats.norm.cdf)
    assert 0 <= d < 0.08
    assert ks_distance(z + 10, stats.norm.cdf) > 0.99


def test_noiseless_coverage_is_one():
    model = {"kind": "linear", "coeffs": [1.0, 0.5], "response": {"mu": 1.0, "sigma": 1e-8}}
    cfg = band_config(500, 0.3, (-1, 1), pi_reps=100)
    rep = coverage_experiment(model, "regression", "1+0*x", cfg, 50, seed=1)
    assert rep.summary["coverage"] == 1.0 and rep.summary["valid"] == 50
    assert rep.summary["std_error"] == 0.0


def test_coverage_report_and_determinism():
    cfg = band_config(800, 0.1, (0.2, 0.8), pi_reps=100)
    model = {"kind": "iid", "innovation": "uniform_centered",
             "loc": 0.5, "scale": 1 / (2 * math.sqrt(3))}
    a = coverage_experiment(model, "density", 1.0, cfg, 50, seed=3)
    s = a.summary
    assert 0 <= s["coverage"] <= 1 and s["enough_valid"]
    assert s["std_error"] == pytest.approx(math.sqrt(s["coverage"] * (1 - s["coverage"]) / 50))
    again = run_experiment("coverage", {**a.config, "reps": a.reps, "seed": a.seed})
    assert again.summary == a.summary
    assert np.array_equal(again.statistics["covered"], a.statistics["covered"])
    json.dumps(a.to_dict())
    assert "coverage" in a.render_text()


def test_coverage_preconditions():
    cfg = band_config(200, 0.2, (-1, 1), pi_reps=100)
    with pytest.raises(InvalidReps):
        coverage_experiment(IID, "density", "0*x", cfg, 49, seed=0)
    with pytest.raises(DomainError):
        coverage_experiment(IID, "regression", "0*x", cfg, 50, seed=0)
    with pytest.raises(ValueError):
        coverage_experiment(IID, "drift", "0*x", cfg, 50, seed=0)


def test_invalid_replicates_are_counted():
    # a window far in the tail makes every replicate fail the density floor
    cfg = band_config(300, 0.2, (3.5, 4.5), method="gumbel")
    with pytest.warns(UserWarning, match="valid"):
        rep = coverage_experiment(IID, "density", stats.norm.pdf, cfg, 50, seed=0)
    assert rep.summary["valid"] == 0 and not rep.summary["enough_valid"]
    assert sum(rep.summary["invalid_by_error"].values()) == 50


def test_variance_target_runs():
    cfg = band_config(600, 0.3, (-0.8, 0.8), pi_reps=100, bias_correct=False)
    rep = coverage_experiment(REG, "variance", "0.25+0*x", cfg, 50, seed=4)
    assert rep.summary["valid_fraction"] >= 0.95
    assert 0.5 <= rep.summary["coverage"] <= 1.0


def test_gumbel_experiment_small():
    rep = gumbel_convergence_experiment(IID, 1000, 1000 ** -0.2, (-1, 1), reps=60, seed=5)
    assert 0 <= rep.summary["ks_gumbel"] <= 1
    assert rep.statistics["z"].size == 60
    again = gumbel_convergence_experiment(IID, 1000, 1000 ** -0.2, (-1, 1), reps=60, seed=5)
    assert np.array_equal(rep.statistics["z"], again.statistics["z"])
    t = gumbel_convergence_experiment(IID, 1000, 1000 ** -0.2, (-1, 1), reps=60, seed=5,
                                      centering="true_f")
    assert t.summary["mean_z"] != rep.summary["mean_z"]


def test_gumbel_experiment_errors():
    with pytest.raises(BandwidthTooLarge):
        gumbel_convergence_experiment(IID, 500, 1.5, (-1, 1), reps=10)
    with pytest.raises(DomainError):
        gumbel_convergence_experiment(ProcessModel("arch", {"a": 1, "b": 0.5}), 500, 0.2,
                                      (-1, 1), reps=10)


def test_bandwidth_rules():
    assert bandwidth_from_rule(0.3, 100) == 0.3
    assert bandwidth_from_rule({"exponent": 0.2}, 10000) == pytest.approx(10000 ** -0.2)
    assert bandwidth_from_rule({"exponent": 0.5, "const": 2}, 100) == pytest.approx(0.2)


def test_dichotomy_small_and_reproducible():
    rules = [{"exponent": 0.4}, {"exponent": 0.2}]
    a = dichotomy_experiment(0.6, rules, 1000, 30, seed=6)
    b = dichotomy_experiment(0.6, rules, 1000, 30, seed=6)
    assert a.summary == b.summary
    for key in ("rule0.delta", "rule1.delta"):
        assert np.array_equal(a.statistics[key], b.statistics[key])
    for r in a.summary.values():
        assert 0 <= r["ks_gumbel"] <= 1 and 0 <= r["ks_half_normal"] <= 1
        assert r["closer"] in ("gumbel", "half_normal")
    with pytest.raises(DomainError):
        dichotomy_experiment(0.4, rules, 100, 5, seed=0)
