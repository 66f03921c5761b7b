"""End-to-end drift and volatility bands for a sampled short-rate series.

Stages: load, pairs, calibrate, regression band, volatility band, gof,
write. The config is a JSON object::

    {
      "input": {"path": "rates.csv", "column": "rate", "delim": ",", "delta": 0.004},
      "synthetic": {"model": {...ProcessModel...}, "n": 5000},   # instead of input
      "bandwidth": 0.37, "h": null, "interval": [0.35, 8.06],
      "alpha": 0.05, "kernel": "epanechnikov", "seed": 42,
      "calibration": {"method": "simulated", "reps": 10000, "multiplier": "normal"},
      "bias_correct": true, "deriv_bandwidth": null,
      "nu_eta": null, "eta": null, "gof": ["affine"],
      "l1_log_arg": "bbar", "output_dir": "out", "dump_pi": false
    }
"""
from __future__ import annotations

import datetime as _dt
import warnings
from pathlib import Path

import numpy as np

from .bands import gof_test, scb_regression, scb_volatility
from .errors import InputError
from .io import (
    DEFAULT_DELTA, config_hash, export_band, interval_coverage, load_series,
    make_regression_pairs, write_columns, write_json,
)
from .processes import ProcessModel, child_seed

DEFAULTS = {
    "h": None, "alpha": 0.05, "kernel": "epanechnikov", "seed": 0,
    "calibration": {"method": "simulated", "reps": 1000, "multiplier": "normal"},
    "bias_correct": True, "deriv_bandwidth": None, "nu_eta": None, "eta": None,
    "gof": ["affine"], "l1_log_arg": "bbar", "output_dir": "scb_out", "dump_pi": False,
}
OUTPUT_FILES = ("regression_band.csv", "regression_band.json", "volatility_band.csv",
                "volatility_band.json", "calibration.json", "gof.json", "summary.json")


def resolve_config(config: dict) -> dict:
    cfg = {**DEFAULTS, **config}
    cfg["calibration"] = {**DEFAULTS["calibration"], **config.get("calibration", {})}
    for key in ("bandwidth", "interval"):
        if key not in cfg:
            raise InputError(f"pipeline config needs {key!r}")
    if ("input" in cfg) == ("synthetic" in cfg):
        raise InputError("pipeline config needs exactly one of 'input' or 'synthetic'")
    return cfg


class _Stage:
    """Tags any error raised inside the block with the stage name."""

    def __init__(self, name, log):
        self.name = name
        self.log = log

    def __enter__(self):
        return self

    def __exit__(self, et, exc, tb):
        if exc is None:
            self.log.append(self.name)
            return False
        exc.stage = self.name
        if exc.args and isinstance(exc.args[0], str):
            exc.args = (f"[stage {self.name}] {exc.args[0]}",) + exc.args[1:]
        return False


def _load(cfg):
    if "synthetic" in cfg:
        syn = cfg["synthetic"]
        model = ProcessModel.from_dict(syn["model"])
        x, y = model.pairs(int(syn["n"]), child_seed(cfg["seed"], 7))
        delta = model.params.get("delta", DEFAULT_DELTA)
        raw = np.concatenate([x, [x[-1] + y[-1]]])
        return make_regression_pairs(raw, delta, {"synthetic": model.to_dict()}), {}
    inp = cfg["input"]
    series = load_series(inp["path"], inp.get("column", "rate"), inp.get("delim", ","))
    data = make_regression_pairs(series, inp.get("delta", DEFAULT_DELTA))
    return data, series.to_dict()


def run_pipeline(config: dict, output_dir=None) -> dict:
    """Run every stage and write the outputs; returns the summary dict.

    Output files carry the config hash. Only ``summary.json`` carries a
    timestamp, and the timestamp is excluded from the hash.
    """
    cfg = resolve_config(config)
    out = Path(output_dir or cfg["output_dir"])
    chash = config_hash(cfg)
    done: list[str] = []
    cal = cfg["calibration"]
    b, interval, alpha, kernel = cfg["bandwidth"], tuple(cfg["interval"]), cfg["alpha"], \
        cfg["kernel"]
    h = b if cfg["h"] is None else cfg["h"]
    seed = cfg["seed"]
    stamp = {"config_hash": chash}

    with _Stage("load", done):
        data, load_info = _load(cfg)
        cover = interval_coverage(data.x, interval)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        with _Stage("regression", done):
            reg = scb_regression(data.x, data.y, b, interval, alpha, kernel, cal["method"],
                                 h=h, deriv_bandwidth=cfg["deriv_bandwidth"],
                                 bias_correct=cfg["bias_correct"], reps=cal["reps"],
                                 seed=child_seed(seed, 1), eta=cal["multiplier"],
                                 l1_log_arg=cfg["l1_log_arg"])
        with _Stage("volatility", done):
            pi = reg.pi_sample if h == b else None
            res = reg.residuals
            vol = scb_volatility(res.x, res.values, h, interval, alpha, kernel, cal["method"],
                                 cfg["nu_eta"], eta_law=cfg["eta"],
                                 deriv_bandwidth=None if cfg["deriv_bandwidth"] is None
                                 else cfg["deriv_bandwidth"] * h / b,
                                 bias_correct=cfg["bias_correct"], reps=cal["reps"],
                                 seed=child_seed(seed, 2), eta=cal["multiplier"],
                                 pi_sample=pi, l1_log_arg=cfg["l1_log_arg"], design=data.x)
        with _Stage("gof", done):
            verdicts = [gof_test(reg, fam, x=data.x, y=data.y).to_dict() for fam in cfg["gof"]]
    warn_msgs = sorted({str(w.message) for w in caught})

    with _Stage("write", done):
        export_band(reg, out / "regression_band.csv")
        export_band(reg, out / "regression_band.json", extra=stamp)
        export_band(vol, out / "volatility_band.csv")
        export_band(vol, out / "volatility_band.json", extra=stamp)
        calib = {"regression": reg.calibration.to_dict(),
                 "volatility": vol.calibration.to_dict(), **stamp}
        if reg.pi_sample is not None:
            calib["pi_sample"] = reg.pi_sample.summary()
            if cfg["dump_pi"]:
                write_columns(out / "pi_sample.csv", {"pi": reg.pi_sample.values})
        write_json(calib, out / "calibration.json")
        write_json({"level": alpha, "tests": verdicts, **stamp}, out / "gof.json")
        summary = {
            "config": cfg,
            "config_hash": chash,
            "data": {**data.to_dict(), "load": load_info,
                     "interval_coverage": cover},
            "regression": {"multiplier": reg.multiplier, "meta": reg.meta},
            "volatility": {"multiplier": vol.multiplier, "meta": vol.meta},
            "gof": verdicts,
            "warnings": warn_msgs,
            "stages": done + ["write"],
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        }
        write_json(summary, out / "summary.json")
    return summary
