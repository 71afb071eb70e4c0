import numpy as np
import pytest

from mirglucose.evaluation import PipelineConfig, cross_validate
from mirglucose.features import FeatureMethod
from mirglucose.mlcore import RidgeConfig, SvrConfig
from mirglucose.tuning import (SearchSpace, TrialResult, default_search_space, grid_search,
                               select_best, trace_csv_text)
from mirglucose.spectra import SynthesisConfig, WavenumberGrid, synthesize


def small_dataset(n, seed=0):
    grid = WavenumberGrid(900.0, 2.0, 300)
    cfg = SynthesisConfig(n_samples=n, seed=seed, grid=grid, band_centers=(1035.0, 1080.0, 1150.0),
                          band_widths=(12.0, 15.0, 12.0), band_gains=(2e-4, 1.5e-4, 1e-4),
                          matrix_centers=(1300.0,), matrix_widths=(40.0,), matrix_heights=(0.4,))
    return synthesize(cfg)


TOY = SearchSpace([FeatureMethod.base(), FeatureMethod.tbd(0.1)], [2, 3, 9],
                  [RidgeConfig(10.0), RidgeConfig(50.0), SvrConfig("linear", 1.0, 0.1),
                   SvrConfig("rbf", 0.5, 0.2), SvrConfig("linear", 2.0, 0.3)])


@pytest.fixture(scope="module")
def toy_trace():
    return small_dataset(10, seed=2), grid_search(small_dataset(10, seed=2), TOY)


def test_default_space_sizes_and_ranges():
    tbd = default_search_space("tbd", "ridge")
    assert len(tbd) == 15 * 20 * 10 == 3000
    alphas = [m.alpha for m in tbd.models]
    assert alphas[0] == 10.0 and alphas[-1] == 100.0
    taus = [m.tau for m in tbd.methods]
    assert taus[0] == pytest.approx(0.02) and taus[-1] == pytest.approx(0.3)
    assert np.all(np.diff(np.log(taus)) == pytest.approx(np.log(15) / 14))
    svr = default_search_space("base", "svr")
    assert len(svr.models) == 10 * 5 * 3
    assert {m.kernel for m in svr.models} == {"linear", "rbf", "poly"}
    adpd = default_search_space("adpd", "ridge")
    assert adpd.methods[0].alpha == 0.0 and adpd.methods[-1].alpha == 70.0
    assert list(tbd.pca_ks) == list(range(1, 21))
    with pytest.raises(ValueError):
        default_search_space("wavelet", "ridge")


def test_space_round_trip_and_order():
    back = SearchSpace.from_dict(TOY.to_dict())
    assert back == TOY
    pts = TOY.points()
    assert len(pts) == len(TOY) == 30
    assert pts[0][1:] == (TOY.methods[0], 2, TOY.models[0])
    assert pts[6][1:] == (TOY.methods[0], 3, TOY.models[1])
    with pytest.raises(ValueError):
        SearchSpace([], [1], [RidgeConfig()])


def test_engine_matches_exhaustive_manual_loop(toy_trace):
    ds, trace = toy_trace
    assert [t.index for t in trace.trials] == list(range(len(TOY)))
    for t in trace.trials:
        if t.pca_k == 9:
            continue
        res = cross_validate(ds, PipelineConfig(t.method, t.pca_k, t.model))
        assert t.status == "ok"
        assert t.metrics.mse == res.metrics.mse
        np.testing.assert_array_equal(t.metrics.absolute_errors, res.metrics.absolute_errors)
    ok = [t for t in trace.trials if t.status == "ok"]
    assert trace.best == min(ok, key=lambda t: (t.mse, t.pca_k, t.index))


def test_oversized_pca_is_skipped(toy_trace):
    _, trace = toy_trace
    big = [t for t in trace.trials if t.pca_k == 9]
    assert big and all(t.status == "skipped" and t.metrics is None for t in big)
    assert "pca_k=9" in big[0].message


def test_threads_and_reruns_give_identical_trace(toy_trace):
    ds, trace = toy_trace
    again = grid_search(ds, TOY, threads=2)
    assert trace_csv_text(again) == trace_csv_text(trace)


def test_trace_csv_layout(toy_trace):
    _, trace = toy_trace
    lines = trace_csv_text(trace).splitlines()
    assert len(lines) == len(TOY) + 1
    header = lines[0].split(",")
    assert header[0] == "trial" and "mse" in header and "status" in header
    first = dict(zip(header, lines[1].split(",")))
    assert float(first["mse"]) == trace.trials[0].mse
    assert first["method"] == "base" and first["tau"] == ""


def trial(index, mse, k, reg, family="ridge"):
    from mirglucose.evaluation import metrics_from_arrays
    model = RidgeConfig(reg) if family == "ridge" else SvrConfig("linear", reg, 0.1)
    err = np.sqrt(mse)
    metrics = metrics_from_arrays([0.0, 1.0], [err, 1.0 + err])
    return TrialResult(index, FeatureMethod.base(), k, model, "ok", metrics)


def test_tie_break_prefers_fewer_components_then_less_penalty():
    a = trial(0, 4.0, 5, 10.0)
    b = trial(1, 4.0, 3, 50.0)
    c = trial(2, 4.0, 3, 20.0)
    d = trial(3, 4.0, 3, 20.0)
    assert select_best([a, b, c, d]) is c
    assert select_best([a, trial(4, 3.0, 9, 100.0)]).index == 4
    assert select_best([TrialResult(0, FeatureMethod.base(), 1, RidgeConfig(), "skipped")]) is None


def test_best_pipeline_reproduces_best_trial(toy_trace):
    ds, trace = toy_trace
    res = cross_validate(ds, trace.best_pipeline())
    assert res.metrics.mse == trace.best.mse


def test_grid_search_needs_four_samples():
    with pytest.raises(ValueError):
        grid_search(small_dataset(3), TOY)
