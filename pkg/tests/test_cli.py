import hashlib
import json

import numpy as np
import pytest

from mirglucose.cli import load_run_config, main, run_evaluation
from mirglucose.evaluation import PipelineConfig, cross_validate
from mirglucose.features import FeatureMethod
from mirglucose.mlcore import RidgeConfig
from mirglucose.spectra import SynthesisConfig, WavenumberGrid, ingest_csv, synthesize

SYNTH = {"n_samples": 10, "seed": 3, "grid": {"start": 900.0, "step": 2.0, "count": 300},
         "band_centers": [1035.0, 1080.0, 1150.0], "band_widths": [12.0, 15.0, 12.0],
         "band_gains": [2e-4, 1.5e-4, 1e-4], "matrix_centers": [1300.0],
         "matrix_widths": [40.0], "matrix_heights": [0.4]}


def write(path, doc):
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc, indent=1))
    return str(path)


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write(root / "synth.json", {"schema_version": 1, "synthesis": SYNTH, "output_dir": "syn"})
    assert run("synth", "--config", cfg) == 0
    return root


def test_synth_writes_dataset_and_manifest(workspace):
    out = workspace / "syn"
    ds = ingest_csv(out / "spectra.csv", out / "labels.csv")
    assert len(ds) == 10
    manifest = json.loads((out / "manifest.json").read_text())
    files = {f["path"]: f for f in manifest["files"]}
    assert {"spectra.csv", "labels.csv", "synthesis.json"} <= set(files)
    digest = hashlib.sha256((out / "labels.csv").read_bytes()).hexdigest()
    assert files["labels.csv"]["sha256"] == digest
    assert manifest["config_sha256"] == hashlib.sha256(
        (workspace / "synth.json").read_bytes()).hexdigest()


def test_seed_flag_overrides_config(tmp_path):
    cfg = write(tmp_path / "s.json", {"schema_version": 1, "synthesis": SYNTH})
    assert run("synth", "--config", cfg, "--seed", 9, "--out", tmp_path / "a") == 0
    labels = (tmp_path / "a" / "labels.csv").read_text()
    grid = WavenumberGrid(900.0, 2.0, 300)
    params = {k: v for k, v in SYNTH.items() if k not in ("grid", "seed")}
    expected = synthesize(SynthesisConfig(seed=9, grid=grid, **params)).labels
    got = [float(line.split(",")[1]) for line in labels.splitlines()[1:]]
    np.testing.assert_allclose(got, expected, rtol=1e-11)  # csv keeps 12 digits


def test_bad_json_reports_line_and_column(tmp_path, capsys):
    cfg = write(tmp_path / "bad.json", '{"schema_version": 1,\n "synthesis": {,}}')
    assert run("synth", "--config", cfg) == 2
    err = capsys.readouterr().err
    assert "line 2" in err and "column" in err


@pytest.mark.parametrize("doc, fragment", [
    ({"synthesis": {}}, "schema_version"),
    ({"schema_version": 2, "synthesis": {}}, "schema_version"),
    ({"schema_version": 1, "synthesis": {}, "data": {}}, "synthesis"),
    ({"schema_version": 1, "synthesis": {"n_samples": 1}}, "n_samples"),
])
def test_config_errors_exit_2(tmp_path, capsys, doc, fragment):
    assert run("synth", "--config", write(tmp_path / "c.json", doc)) == 2
    assert fragment in capsys.readouterr().err


def test_missing_files(tmp_path):
    assert run("synth", "--config", tmp_path / "nope.json") in (2, 4)
    cfg = write(tmp_path / "e.json", {"schema_version": 1,
                                      "data": {"spectra": "x.csv", "labels": "y.csv"},
                                      "method": {"kind": "base"}, "pca_k": 2,
                                      "model": {"family": "ridge", "alpha": 10}})
    assert run("evaluate", "--config", cfg) == 4


def evaluate_doc(workspace, out, method=None):
    return {"schema_version": 1,
            "data": {"spectra": str(workspace / "syn/spectra.csv"),
                     "labels": str(workspace / "syn/labels.csv")},
            "method": method or {"kind": "tbd", "tau": 0.1}, "pca_k": 3,
            "model": {"family": "ridge", "alpha": 20}, "output_dir": out}


def test_evaluate_matches_library(workspace):
    cfg = write(workspace / "ev.json", evaluate_doc(workspace, "ev"))
    assert run("evaluate", "--config", cfg, "--dump-stages") == 0
    report = json.loads((workspace / "ev/report.json").read_text())
    ds = ingest_csv(workspace / "syn/spectra.csv", workspace / "syn/labels.csv")
    res = cross_validate(ds, PipelineConfig(FeatureMethod.tbd(0.1), 3, RidgeConfig(20.0)))
    for name in ("mse", "mae", "r2"):
        assert abs(report["metrics"][name] - getattr(res.metrics, name)) <= 1e-12
    preds = [p["predicted"] for p in report["points"]]
    np.testing.assert_array_equal(preds, [p.predicted for p in res.predictions])
    _, lib, _ = run_evaluation(load_run_config(cfg))
    assert lib.metrics.mse == report["metrics"]["mse"]
    for name in ("points.csv", "grid_clarke.svg", "grid_parkes2.svg", "abs_errors.csv"):
        assert (workspace / "ev" / name).exists()
    stages = sorted((workspace / "ev/stages").iterdir())
    assert len(stages) == 10
    assert stages[0].read_text().splitlines()[0].startswith("wavenumber")


def test_preprocess_writes_absorbance(workspace):
    cfg = write(workspace / "pre.json", {"schema_version": 1,
                                         "data": evaluate_doc(workspace, "")["data"],
                                         "output_dir": "pre"})
    assert run("preprocess", "--config", cfg) == 0
    assert (workspace / "pre/preprocessed.csv").exists()


@pytest.fixture(scope="module")
def tuned(workspace):
    doc = {"schema_version": 1, "synthesis": SYNTH, "output_dir": "tu",
           "search": {"method_family": "tbd", "model_family": ["ridge", "svr"], "n_tau": 2,
                      "n_ridge": 2, "n_c": 2, "epsilons": [0.1], "kernels": ["linear"],
                      "pca_ks": [2, 4, 9]}}
    cfg = write(workspace / "tu.json", doc)
    assert run("tune", "--config", cfg) == 0
    return workspace / "tu"


def test_tune_outputs_and_best_config_reproduces(tuned):
    best = json.loads((tuned / "best.json").read_text())
    assert best["trial_counts"]["skipped"] == 2 * 4
    assert run("evaluate", "--config", tuned / "best_config.json") == 0
    report = json.loads((tuned / "best_eval/report.json").read_text())
    assert report["metrics"]["mse"] == best["mse"]
    trace = (tuned / "trace.csv").read_text().splitlines()
    row = dict(zip(trace[0].split(","), trace[1 + best["trial"]].split(",")))
    assert float(row["mse"]) == best["mse"]


def test_tune_is_deterministic(tuned, workspace):
    assert run("tune", "--config", workspace / "tu.json", "--out", workspace / "tu2",
               "--threads", 2) == 0
    for name in ("trace.csv", "best_config.json", "best.json"):
        assert (tuned / name).read_bytes() == (workspace / "tu2" / name).read_bytes()


def test_compare(workspace, tuned, capsys):
    ev = write(workspace / "ev2.json", evaluate_doc(workspace, "ev2", {"kind": "base"}))
    cmp_doc = {"schema_version": 1, "runs": ["ev2.json", "tu/best_config.json"],
               "output_dir": "cmp"}
    cmp_cfg = write(workspace / "cmp.json", cmp_doc)
    assert run("compare", "--config", cmp_cfg) == 3
    assert "evaluate" in capsys.readouterr().err
    assert run("evaluate", "--config", ev) == 0
    if not (tuned / "best_eval/report.json").exists():
        assert run("evaluate", "--config", tuned / "best_config.json") == 0
    assert run("compare", "--config", cmp_cfg) == 0
    table = (workspace / "cmp/metrics_table.csv").read_text().splitlines()
    assert len(table) == 4
    mse = float(table[1].split(",")[1])
    assert mse == json.loads((workspace / "ev2/report.json").read_text())["metrics"]["mse"]
    one = write(workspace / "cmp1.json", {"schema_version": 1, "runs": ["ev2.json"]})
    assert run("compare", "--config", one) == 2
