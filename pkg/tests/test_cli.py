import csv
import json
from pathlib import Path

import numpy as np
import pytest

from coldstart import cli
from coldstart.metrics import evaluate
from coldstart.trace import load_series, to_gap_series


def run(*args):
    return cli.main([str(a) for a in args])


@pytest.fixture
def days(tmp_path):
    out = tmp_path / "days"
    assert run("synth", "--day-files", 14, "--functions", 7, "--seed", 1, "--out", out) == 0
    return sorted(out.glob("*.csv"))


def test_ingest_fourteen_days(days, tmp_path):
    assert run("ingest", "--input", *days, "--out", tmp_path / "ing") == 0
    m = json.loads((tmp_path / "ing" / "manifest.json").read_text())
    assert m["numDays"] == 14 and m["seriesLength"] == 20160 and m["numFunctions"] == 7
    series = load_series(tmp_path / "ing" / "series.csv")
    assert len(series) == 7 and len(series[0]) == 20160


def test_ingest_http_only_matches_scan(days, tmp_path):
    assert run("ingest", "--input", *days, "--http-only", "--out", tmp_path / "h") == 0
    m = json.loads((tmp_path / "h" / "manifest.json").read_text())
    with open(days[0]) as fh:
        http_rows = sum(1 for r in list(csv.reader(fh))[1:] if r[3] == "http")
    assert m["numFunctions"] == http_rows


def test_ingest_is_idempotent_outside_manifest(days, tmp_path):
    run("ingest", "--input", *days[:2], "--granularity", "hour", "--out", tmp_path / "a")
    run("ingest", "--input", *days[:2], "--granularity", "hour", "--out", tmp_path / "b")
    assert (tmp_path / "a" / "series.csv").read_bytes() == (tmp_path / "b" / "series.csv").read_bytes()


def test_ingest_errors_name_the_file(tmp_path, capsys):
    assert run("ingest", "--input", tmp_path / "missing.csv", "--out", tmp_path / "x") == 2
    assert "missing.csv" in capsys.readouterr().err
    bad = tmp_path / "bad.csv"
    bad.write_text("HashOwner,HashApp\n1,2\n")
    assert run("ingest", "--input", bad, "--out", tmp_path / "x") == 2
    assert "bad.csv" in capsys.readouterr().err


def test_cluster_and_rerun_identical(days, tmp_path):
    run("ingest", "--input", *days[:2], "--out", tmp_path / "ing")
    series = tmp_path / "ing" / "series.csv"
    assert run("cluster", "--series", series, "--eps", 0.3, "--min-pts", 2, "--out", tmp_path / "c1.json") == 0
    run("cluster", "--series", series, "--eps", 0.3, "--min-pts", 2, "--out", tmp_path / "c2.json")
    assert (tmp_path / "c1.json").read_bytes() == (tmp_path / "c2.json").read_bytes()
    rep = json.loads((tmp_path / "c1.json").read_text())
    assert {"eps", "minPts", "clusters", "noise"} <= set(rep)


def test_cluster_empty_input_is_an_error(tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text("[]")
    assert run("cluster", "--series", empty, "--out", tmp_path / "c.json") == 2


def test_synth_patterns(tmp_path):
    p = tmp_path / "p.csv"
    assert run("synth", "--pattern", "periodic", "--period", 9, "--length", 500, "--out", p) == 0
    assert set(to_gap_series(load_series(p)[0]).gaps.tolist()) == {9}
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run("synth", "--pattern", "sporadic", "--seed", 4, "--length", 5000, "--out", a)
    run("synth", "--pattern", "sporadic", "--seed", 4, "--length", 5000, "--out", b)
    assert a.read_bytes() == b.read_bytes()
    gaps = to_gap_series(load_series(a)[0]).gaps
    assert gaps.min() >= 11 and gaps.max() <= 20
    run("synth", "--pattern", "bursty", "--seed", 4, "--length", 5000, "--out", b)
    assert load_series(b)[0].values.sum() > 0


def test_simulate_fixed_vs_oracle(tmp_path):
    s = tmp_path / "s.csv"
    values = np.zeros(11 * 100, dtype=int)
    values[::11] = 1
    from coldstart.trace import DEFAULT_START, InvocationSeries, save_series

    save_series([InvocationSeries("f", "minute", DEFAULT_START, values)], s)
    assert run("simulate", "--series", s, "--policy", "fixed", "--policy", "oracle", "--out", tmp_path / "o") == 0
    rows = list(csv.DictReader(open(tmp_path / "o" / "summary.csv")))
    assert [(r["platform"], float(r["cs_per_100"])) for r in rows] == [("OpenWhisk", 100.0), ("Oracle", 1.0)]
    run("simulate", "--series", s, "--policy", "fixed", "--policy", "oracle", "--out", tmp_path / "o2")
    for name in ("summary.csv", "plots/f__fixed_cold.csv", "runs/f__oracle.json"):
        assert (tmp_path / "o" / name).read_bytes() == (tmp_path / "o2" / name).read_bytes()
    run_json = json.loads((tmp_path / "o" / "runs" / "f__fixed.json").read_text())
    assert run_json["coldStarts"] == 100 and run_json["policy"] == "fixed"


def test_simulate_usage_errors(tmp_path):
    s = tmp_path / "s.csv"
    run("synth", "--pattern", "sporadic", "--length", 2000, "--out", s)
    assert run("simulate", "--series", s, "--window", 0, "--out", tmp_path / "x") == 2
    assert run("simulate", "--series", s, "--policy", "adaptive", "--out", tmp_path / "x") == 2
    assert run("simulate", "--series", s, "--policy", "adaptive", "--checkpoint", tmp_path / "nope.json",
               "--out", tmp_path / "x") == 2


SMALL = ["--context", 12, "--horizon", 4, "--enc-layers", 1, "--dec-layers", 1, "--d-model", 8,
         "--heads", 2, "--dropout", 0, "--epochs", 2, "--stride", 4]


def test_train_forecast_evaluate(tmp_path):
    s = tmp_path / "s.csv"
    run("synth", "--pattern", "periodic", "--period", 5, "--length", 400, "--out", s)
    ck = tmp_path / "t.json"
    assert run("train", "--series", s, *SMALL, "--lags", "1,2,5", "--out", ck) == 0
    assert (tmp_path / "t.loss.csv").read_text().startswith("epoch,loss")
    ck2 = tmp_path / "t2.json"
    run("train", "--series", s, *SMALL, "--lags", "1,2,5", "--out", ck2)
    assert ck.read_bytes() == ck2.read_bytes()

    fc = tmp_path / "fc.json"
    assert run("forecast", "--checkpoint", ck, "--series", s, "--t0", 300, "--num-samples", 10, "--out", fc) == 0
    out = json.loads(fc.read_text())
    assert set(out) >= {"functionId", "t0", "granularity", "pointForecast", "quantiles", "numSamples", "seed"}
    assert len(out["pointForecast"]) == 4 and set(out["quantiles"]) == {"0.5", "0.9"}

    rc = run("evaluate", "--series", s, "--checkpoint", ck, "--forecast", fc, "--num-samples", 10, "--seasonal-period", 5,
             "--out-csv", tmp_path / "m.csv", "--out-json", tmp_path / "m.json")
    assert rc == 0
    rows = json.loads((tmp_path / "m.json").read_text())
    assert [r["model"] for r in rows] == ["transformer", "seasonal-naive", "fc"]
    values = load_series(s)[0].values
    expect = evaluate(values[300:304], out["pointForecast"])
    assert rows[2]["rmse"] == expect.rmse and rows[2]["smape"] == expect.smape


def test_evaluate_identity_fixture(tmp_path):
    s = tmp_path / "s.csv"
    run("synth", "--pattern", "bursty", "--seed", 2, "--length", 3000, "--out", s)
    values = load_series(s)[0].values
    t0 = int(np.flatnonzero(values)[0])
    fc = tmp_path / "id.json"
    fc.write_text(json.dumps({"functionId": "synth-bursty-2", "t0": t0, "model": "identity",
                              "pointForecast": values[t0:t0 + 30].tolist()}))
    assert run("evaluate", "--series", s, "--forecast", fc, "--out-csv", tmp_path / "m.csv") == 0
    row = list(csv.DictReader(open(tmp_path / "m.csv")))[0]
    got = [float(row[k]) for k in ("smape", "explained_variance", "rmse", "normalized_rmse", "r2", "spearman")]
    assert got == [0.0, 1.0, 0.0, 0.0, 1.0, 1.0]


def test_gap_training_and_adaptive_simulation(tmp_path):
    s = tmp_path / "s.csv"
    run("synth", "--pattern", "sporadic", "--length", 6000, "--seed", 2, "--out", s)
    ck = tmp_path / "g.json"
    small = [a if a != 4 else 2 for a in SMALL]
    assert run("train", "--series", s, "--target", "gaps", *small, "--history-fraction", 0.6, "--out", ck) == 0
    extra = json.loads(ck.read_text())["extra"]
    assert extra["target"] == "gaps" and extra["granularity"] == "event"
    out = tmp_path / "sim"
    assert run("simulate", "--series", s, "--policy", "fixed", "--policy", "adaptive", "--checkpoint", ck,
               "--history-fraction", 0.6, "--num-samples", 20, "--out", out) == 0
    rows = list(csv.DictReader(open(out / "summary.csv")))
    assert [r["platform"] for r in rows] == ["OpenWhisk", "OW + Transf"]
    fixed = json.loads((out / "runs" / "synth-sporadic-2__fixed.json").read_text())
    adapt = json.loads((out / "runs" / "synth-sporadic-2__adaptive.json").read_text())
    assert fixed["invocations"] == adapt["invocations"] > 0
    assert fixed["skippedInvocations"] == adapt["skippedInvocations"]


def test_non_finite_training_exits_3(tmp_path):
    s = tmp_path / "s.csv"
    run("synth", "--pattern", "bursty", "--length", 400, "--out", s)
    with np.errstate(all="ignore"):
        rc = run("train", "--series", s, *SMALL, "--lags", "1,2", "--lr", "1e300", "--out", tmp_path / "x.json")
    assert rc == 3


def test_run_pipeline_is_reproducible(tmp_path):
    run("synth", "--day-files", 7, "--functions", 3, "--seed", 5, "--out", tmp_path / "days")
    cfg = {
        "tracePaths": sorted(str(p) for p in (tmp_path / "days").glob("*.csv")),
        "httpOnly": False,
        "granularity": "hour",
        "clustering": {"eps": 0.5, "minPts": 1},
        "maxFunctions": 2,
        "model": {"context_length": 12, "prediction_length": 6, "num_layers_encoder": 1,
                  "num_layers_decoder": 1, "d_model": 8, "num_heads": 2, "dropout": 0.0,
                  "lags_sequence": [1, 2, 24]},
        "gapModel": {"context_length": 8, "prediction_length": 2, "num_layers_encoder": 1,
                     "num_layers_decoder": 1, "d_model": 8, "num_heads": 2, "dropout": 0.0},
        "training": {"epochs": 1, "batchSize": 16, "learningRate": 0.003, "seed": 0, "stride": 8},
        "forecast": {"numSamples": 8, "seed": 0},
        "policies": [{"kind": "fixed", "window": 10}, {"kind": "adaptive"}, {"kind": "oracle"}],
        "simulation": {"invocations": 30, "historyFraction": 0.5},
        "output": "out",
    }
    (tmp_path / "exp.json").write_text(json.dumps(cfg))
    assert run("run", "--config", tmp_path / "exp.json") == 0
    assert run("run", "--config", tmp_path / "exp.json", "--out", tmp_path / "again") == 0
    first = {p.relative_to(tmp_path / "out"): p.read_bytes() for p in (tmp_path / "out").rglob("*") if p.is_file()}
    second = {p.relative_to(tmp_path / "again"): p.read_bytes() for p in (tmp_path / "again").rglob("*") if p.is_file()}
    assert first.keys() == second.keys()
    differing = [str(k) for k in first if first[k] != second[k]]
    assert differing in ([], ["manifest.json"])
    assert any(str(k).startswith("checkpoints") for k in first) and any(str(k).startswith("forecasts") for k in first)


def test_experiment_config_rejects_unknown_keys():
    with pytest.raises(cli.UsageError):
        cli.ExperimentConfig.from_dict({"nonsense": 1})


def test_experiment_config_expands_trace_globs(tmp_path):
    run("synth", "--day-files", 3, "--functions", 2, "--out", tmp_path / "days")
    cfg = cli.ExperimentConfig.from_dict({"tracePaths": ["days/*.csv"]}, base_dir=tmp_path)
    assert [Path(p).name[-7:] for p in cfg.trace_paths] == ["d01.csv", "d02.csv", "d03.csv"]
