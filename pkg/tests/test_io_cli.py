import json
import subprocess
import sys

import numpy as np
import pytest

from scb.bands import scb_density
from scb.cli import main
from scb.errors import AllRowsInvalid, ColumnNotFound, FileNotFound, SeriesTooShort
from scb.io import (
    config_hash, export_band, export_curve, interval_coverage, load_columns, load_series,
    make_regression_pairs, read_band_csv, read_table,
)
from scb.pipeline import OUTPUT_FILES, run_pipeline

DIFFUSION = {"kind": "diffusion_discrete", "mu": "2*(1-x)", "sigma": 0.3, "delta": 0.004,
             "x0": 1.0}
PIPE = {"synthetic": {"model": DIFFUSION, "n": 5000}, "bandwidth": 0.05,
        "interval": [0.8, 1.2], "seed": 11, "calibration": {"reps": 200}}


def write(path, text):
    path.write_text(text)
    return str(path)


def test_load_series_examples(tmp_path):
    p = write(tmp_path / "a.csv", "date,rate\n1,1.0\n2,2.0\n3,3.0\n")
    s = load_series(p, "rate")
    assert s.values.tolist() == [1, 2, 3] and s.dropped == 0
    p = write(tmp_path / "b.csv", "rate\n4\n\n5\nnan\n7\n")
    s = load_series(p, "rate")
    # the blank line and "nan" both count as invalid rows
    assert s.values.tolist() == [4, 5, 7] and s.dropped == 2
    p = write(tmp_path / "c.csv", "d,rate\nx,1\ny,\nz,3\nw,4\n")
    s = load_series(p, "rate")
    assert s.values.tolist() == [1, 3, 4] and s.dropped == 1 and s.total == 4


def test_loader_keeps_order_and_counts(tmp_path):
    vals = np.random.default_rng(0).normal(size=50)
    rows = [repr(float(v)) if i % 7 else "bad" for i, v in enumerate(vals)]
    p = write(tmp_path / "d.csv", "rate\n" + "\n".join(rows) + "\n")
    s = load_series(p, "rate")
    keep = [v for i, v in enumerate(vals) if i % 7]
    assert s.values.tolist() == keep and s.dropped == 50 - len(keep)


def test_loader_errors(tmp_path):
    with pytest.raises(FileNotFound):
        load_series(tmp_path / "missing.csv", "rate")
    p = write(tmp_path / "e.csv", "a,b\n1,2\n")
    with pytest.raises(ColumnNotFound):
        load_series(p, "rate")
    p = write(tmp_path / "f.csv", "rate\nx\ny\n")
    with pytest.raises(AllRowsInvalid):
        load_series(p, "rate")
    p = write(tmp_path / "g.tsv", "x\ty\n1\t2\n3\t4\n")
    (x, y), dropped, total = load_columns(p, ["x", "y"], "\t")
    assert x.tolist() == [1, 3] and y.tolist() == [2, 4]
    assert read_table(p, "\t")[0] == ["x", "y"]


def test_regression_pairs():
    d = make_regression_pairs([1.0, 3.0, 2.0])
    assert d.x.tolist() == [1, 3] and d.y.tolist() == [2, -1] and d.n == 2
    assert d.delta == 1 / 250
    c = make_regression_pairs(np.full(10, 4.2), delta=0.01)
    assert np.all(c.y == 0) and c.x.size == c.y.size == c.raw.size - 1
    assert d.per_annum_mu(np.array([1.0])) == pytest.approx(250.0)
    with pytest.raises(SeriesTooShort):
        make_regression_pairs([1.0])
    with pytest.raises(ValueError):
        make_regression_pairs([1.0, 2.0], delta=0)


def test_interval_coverage():
    assert interval_coverage([0, 1, 2, 3], (0.5, 2)) == 0.5


@pytest.fixture(scope="module")
def band():
    data = np.random.default_rng(1).normal(size=1000)
    return scb_density(data, 0.3, (-1, 1), method="simulated", reps=100, seed=2)


def test_export_round_trip(band, tmp_path):
    p = tmp_path / "band.csv"
    export_band(band, p)
    assert p.read_text().splitlines()[0] == "x,center,lower,upper"
    back = read_band_csv(p)
    for key in ("x", "center", "lower", "upper"):
        assert np.allclose(back[key], getattr(band, key), rtol=1e-10, atol=1e-12)


def test_export_json_fields(band, tmp_path):
    p = tmp_path / "band.json"
    export_band(band, p, extra={"config_hash": "abc"})
    d = json.loads(p.read_text())
    for key in ("level", "method", "bandwidth", "kernel", "calibration", "config_hash"):
        assert key in d
    assert d["kernel"] == "epanechnikov" and d["method"] == "simulated"
    assert d["pi_sample"]["reps"] == 100


def test_export_curve(tmp_path):
    from scb.estimators import EvaluationGrid, kde
    c = kde([0.0, 0.1], 0.5, EvaluationGrid(-1, 1, 5))
    export_curve(c, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "x,value"
    export_curve(c, tmp_path / "c.json")
    assert json.loads((tmp_path / "c.json").read_text())["kind"] == "density"


def test_config_hash_ignores_paths_and_timestamps():
    a = {"bandwidth": 0.3, "input": {"path": "/a/b.csv", "column": "rate"}, "output_dir": "x"}
    b = {"bandwidth": 0.3, "input": {"path": "/c.csv", "column": "rate"}, "output_dir": "y",
         "timestamp": "now", "dump_path": "z"}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash({**a, "bandwidth": 0.31})
    assert len(config_hash(a)) == 64


def test_pipeline_schema_and_determinism(tmp_path):
    s1 = run_pipeline(PIPE, tmp_path / "one")
    s2 = run_pipeline(PIPE, tmp_path / "two")
    assert s1["stages"] == ["load", "regression", "volatility", "gof", "write"]
    for name in OUTPUT_FILES:
        a = (tmp_path / "one" / name).read_text()
        b = (tmp_path / "two" / name).read_text()
        if name == "summary.json":
            da, db = json.loads(a), json.loads(b)
            assert da.pop("timestamp") != "" and db.pop("timestamp") != ""
            assert da == db
        else:
            assert a == b, name
        if name.endswith(".json"):
            assert json.loads(a)["config_hash"] == s1["config_hash"]
    head = (tmp_path / "one" / "regression_band.csv").read_text().splitlines()[0]
    assert head == "x,center,lower,upper"
    gof = json.loads((tmp_path / "one" / "gof.json").read_text())
    assert gof["tests"][0]["hypothesis"].startswith("affine")
    cal = json.loads((tmp_path / "one" / "calibration.json").read_text())
    assert cal["pi_sample"]["reps"] == 200


def test_pipeline_with_input_file(tmp_path):
    from scb.processes import ProcessModel
    x, y = ProcessModel.from_dict(DIFFUSION).pairs(3000, seed=1)
    rates = np.concatenate([x, [x[-1] + y[-1]]])
    p = tmp_path / "rates.csv"
    p.write_text("rate\n" + "\n".join(f"{v:.10g}" for v in rates) + "\n")
    cfg = {"input": {"path": str(p)}, "bandwidth": 0.06, "interval": [0.85, 1.15],
           "seed": 3, "calibration": {"method": "gumbel"}, "gof": ["affine", "constant"]}
    s = run_pipeline(cfg, tmp_path / "out")
    assert s["data"]["load"]["kept"] == 3001
    assert len(s["gof"]) == 2
    moved = {**cfg, "input": {"path": str(tmp_path / "elsewhere.csv")}}
    assert config_hash(moved) != "" and s["config_hash"] == json.loads(
        (tmp_path / "out" / "gof.json").read_text())["config_hash"]


def test_pipeline_stage_errors(tmp_path):
    bad = {**PIPE, "interval": [5.0, 6.0]}
    with pytest.raises(Exception) as info:
        run_pipeline(bad, tmp_path / "bad")
    assert getattr(info.value, "stage", None) == "regression"
    with pytest.raises(Exception):
        run_pipeline({"bandwidth": 0.1, "interval": [0, 1]}, tmp_path)


# CLI

def test_cli_constants(capsys):
    assert main(["constants", "--kernel", "epanechnikov", "--bandwidth", "0.01",
                 "--interval", "0:1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["kernel"]["K2"] == 1.25
    assert out["calibration"]["d_n"] == pytest.approx(2.5802256068, abs=1e-9)
    assert out["J_n"] == 50


@pytest.fixture()
def series_file(tmp_path):
    assert main(["simulate", "--model", "diffusion_discrete", "--mu", "2*(1-x)", "--sigma",
                 "0.3", "--x0", "1", "--delta", "0.004", "--n", "3000", "--seed", "4",
                 "--out", str(tmp_path / "r.csv")]) == 0
    return tmp_path / "r.csv"


def test_cli_band_commands(series_file, tmp_path, capsys):
    base = ["--input", str(series_file), "--bandwidth", "0.06", "--interval", "0.85:1.15",
            "--reps", "100", "--seed", "1"]
    assert main(["regress", *base, "--gof", "affine", "--out", str(tmp_path / "r.json")]) == 0
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["target"] == "regression" and d["gof"][0]["hypothesis"].startswith("affine")
    assert main(["volatility", *base, "--eta", "normal", "--out", str(tmp_path / "v.csv")]) == 0
    assert (tmp_path / "v.csv").read_text().startswith("x,center,lower,upper\n")
    assert main(["density", *base, "--method", "gumbel"]) == 0
    assert json.loads(capsys.readouterr().out)["target"] == "density"
    assert main(["calibrate", "--input", str(series_file), "--bandwidth", "0.06",
                 "--interval", "0.85:1.15", "--reps", "100", "--seed", "2",
                 "--dump", str(tmp_path / "pi.csv")]) == 0
    assert json.loads(capsys.readouterr().out)["reps"] == 100
    assert len((tmp_path / "pi.csv").read_text().splitlines()) == 101


def test_cli_seed_env_fallback(series_file, monkeypatch, capsys):
    args = ["calibrate", "--input", str(series_file), "--bandwidth", "0.06",
            "--interval", "0.85:1.15", "--reps", "100"]
    monkeypatch.setenv("SCB_SEED", "9")
    main(args)
    a = json.loads(capsys.readouterr().out)
    main(args + ["--seed", "9"])
    b = json.loads(capsys.readouterr().out)
    monkeypatch.delenv("SCB_SEED")
    main(args)
    c = json.loads(capsys.readouterr().out)
    assert a == b and a["cutoff"] != c["cutoff"]


def test_cli_exit_codes(series_file, tmp_path, capsys):
    base = ["--bandwidth", "0.06", "--interval", "0.85:1.15"]
    assert main(["regress", "--input", str(tmp_path / "nope.csv"), *base]) == 2
    assert main(["regress", "--input", str(series_file), "--column", "price", *base]) == 2
    assert main(["regress", "--input", str(series_file), "--bandwidth", "2",
                 "--interval", "0.85:1.15", "--method", "gumbel"]) == 3
    assert main(["calibrate", "--input", str(series_file), *base, "--reps", "10"]) == 3
    err = capsys.readouterr().err
    assert "price" in err and "scb: error" in err


def test_cli_invariant_exit_code(monkeypatch, series_file):
    import scb.cli as cli
    from scb.errors import InvariantViolation

    def broken(*a, **k):
        raise InvariantViolation("sandwich")
    monkeypatch.setattr(cli, "scb_density", broken)
    assert main(["density", "--input", str(series_file), "--bandwidth", "0.06",
                 "--interval", "0.85:1.15"]) == 4


def test_cli_experiment_and_pipeline(tmp_path, capsys):
    cfg = {"model": {"kind": "iid"}, "n": 500, "b": 0.3, "interval": [-1, 1], "reps": 20}
    (tmp_path / "g.json").write_text(json.dumps(cfg))
    assert main(["experiment", "gumbel", "--config", str(tmp_path / "g.json"), "--seed", "1",
                 "--summary-only", "--out", str(tmp_path / "rep.json")]) == 0
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert "statistics" not in rep and 0 <= rep["summary"]["ks_gumbel"] <= 1
    (tmp_path / "p.json").write_text(json.dumps(PIPE))
    assert main(["pipeline", "--config", str(tmp_path / "p.json"),
                 "--out-dir", str(tmp_path / "pipe")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["stages"][-1] == "write"
    assert sorted(p.name for p in (tmp_path / "pipe").iterdir()) == sorted(OUTPUT_FILES)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "scb", "constants", "--kernel", "rect"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["kernel"]["K1"] == 0.5
