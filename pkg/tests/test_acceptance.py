"""Acceptance suite: eight criteria, one PASS/FAIL line each.

Every criterion runs all of its checks, prints a single summary line (visible
without ``-s``) and then fails if any check or the runtime budget failed.
"""

import json
import time

import numpy as np
import pytest

from mirglucose.cli import load_run_config, main, run_evaluation
from mirglucose.evaluation import (GridKind, PipelineConfig, clarke_zones, cross_validate,
                                   error_grid_report, fold_split, loocv_run, metrics_from_arrays,
                                   parkes_zones)
from mirglucose.features import FeatureMethod, adpd_values, tbd_values
from mirglucose.mlcore import (RidgeConfig, kernel_matrix, pca_fit, ridge_fit, ridge_predict,
                               svr_fit, svr_predict)
from mirglucose.mlcore.svr import svr_dual_objective
from mirglucose.preprocess import (absorbance_values, derivative_values, minmax_values,
                                   rubberband_values, savgol_values)
from mirglucose.spectra import SynthesisConfig, synthesize
from mirglucose.tuning import SearchSpace, default_search_space, grid_search
from test_evaluation import (CLARKE_FIXTURE, PARKES1_ZONES, PARKES2_ZONES, PARKES_POINTS,
                             clarke_oracle, parkes_oracle)
from test_features import tbd_oracle
from test_mlcore import cov_eig_oracle, dense_qp_dual, ridge_objective


class Criterion:
    """Collects check failures and elapsed time for one criterion."""

    def __init__(self, number, title, budget_s):
        self.number, self.title, self.budget = number, title, budget_s
        self.failures = []
        self.notes = []
        self.start = time.perf_counter()

    def check(self, ok, what):
        if not ok:
            self.failures.append(what)

    def finish(self, capsys):
        elapsed = time.perf_counter() - self.start
        if elapsed >= self.budget:
            self.failures.append(f"runtime {elapsed:.1f} s over the {self.budget} s budget")
        status = "FAIL" if self.failures else "PASS"
        detail = "; ".join(self.notes + self.failures)
        with capsys.disabled():
            print(f"\ncriterion {self.number} [{self.title}]: {status} "
                  f"({elapsed:.1f} s / {self.budget} s){': ' + detail if detail else ''}")
        assert not self.failures, "; ".join(self.failures)


# -- 1 ----------------------------------------------------------------------

def test_criterion_1_preprocessing(capsys):
    c = Criterion(1, "preprocessing suite", 5)
    rng = np.random.default_rng(1)
    for _ in range(50):
        a = rng.uniform(0, 6, rng.integers(1, 400))
        c.check(np.max(np.abs(absorbance_values(10.0 ** (-a)) - a)) <= 1e-12,
                "absorbance inverse")
        y = rng.normal(0, 10, rng.integers(3, 400))
        x = np.arange(y.size, dtype=float)
        once = rubberband_values(x, y)
        c.check(np.all(once >= 0), "rubberband non-negative")
        c.check(np.allclose(rubberband_values(x, once), once, atol=1e-10 * (1 + np.abs(y).max())),
                "rubberband idempotent")
        m = minmax_values(y)
        c.check(m.min() == 0.0 and m.max() == 1.0, "minmax exact range")
        c.check(np.allclose(minmax_values(m), m, atol=1e-15), "minmax idempotent")
        w = np.arange(300.0)
        coefs = rng.normal(0, 1, 3) * [1, 1e-2, 1e-4]
        v = coefs[0] + coefs[1] * w + coefs[2] * w ** 2
        for window in (5, 21, 101):
            h = window // 2
            err = np.abs(savgol_values(v, window, 2)[h:-h] - v[h:-h]).max()
            c.check(err <= 1e-9, f"savgol on quadratic, window {window}: {err:.1e}")
    c.finish(capsys)


# -- 2 ----------------------------------------------------------------------

def test_criterion_2_features(capsys):
    c = Criterion(2, "feature-transform suite", 5)
    rng = np.random.default_rng(2)
    for _ in range(20):
        a = rng.uniform(0, 1, 200)
        d = derivative_values(a, 1.0)
        tau = 100 * np.abs(d).max() * 1.001
        c.check(np.array_equal(tbd_values(a, d, tau)[0], a), "TBD degenerates to Base")
    for _ in range(200):
        a = np.cumsum(rng.normal(0, 0.002, 300)) + rng.uniform(0, 1)
        d = derivative_values(a, 1.0)
        tau = rng.uniform(0.02, 0.3)
        out, mask = tbd_values(a, d, tau)
        ref_out, ref_mask = tbd_oracle(a, d, tau, 100.0)
        c.check(np.array_equal(mask, ref_mask) and np.array_equal(out, ref_out),
                "TBD mask/branch consistency")
    for _ in range(50):
        x, z = rng.uniform(-2, 2, (2, 100))
        c.check(np.array_equal(adpd_values(x, z, 0.0), x), "ADPD identity at alpha=0")
        a1, a2 = rng.uniform(0, 70, 2)
        f0, g = adpd_values(x, z, 0.0), adpd_values(x, z, 1.0) - x
        c.check(np.abs(adpd_values(x, z, a1) - f0 - a1 * g).max() <= 1e-12 * (1 + a1) * 16,
                "ADPD affine in alpha")
        c.check(np.abs(adpd_values(x, z, a2) - adpd_values(x, z, a1) - (a2 - a1) * g).max()
                <= 1e-12 * (1 + a1 + a2) * 16, "ADPD affine in alpha")
    c.finish(capsys)


# -- 3 ----------------------------------------------------------------------

def test_criterion_3_regression_oracles(capsys):
    c = Criterion(3, "regression oracles", 60)
    rng = np.random.default_rng(3)
    worst = 0.0
    for shape in ((20, 5), (6, 40), (30, 10)):
        for alpha in (0.5, 10.0, 100.0):
            X = rng.standard_normal(shape) + 3.0
            y = rng.standard_normal(shape[0]) * 5 + 100
            m = ridge_fit(X, y, alpha)
            theta = np.concatenate([m.coefficients, [m.intercept]])
            scale = max(1.0, ridge_objective(X, y, m.coefficients, m.intercept, alpha))
            for j in range(theta.size):
                e = np.zeros_like(theta)
                e[j] = 1e-5
                up, dn = theta + e, theta - e
                g = (ridge_objective(X, y, up[:-1], up[-1], alpha)
                     - ridge_objective(X, y, dn[:-1], dn[-1], alpha)) / 2e-5
                worst = max(worst, abs(g) / scale)
    c.check(worst <= 1e-8, f"ridge gradient {worst:.1e}")
    m = ridge_fit([[9.0], [11.0]], [4.0, 6.0], 2.0)
    c.check(abs(m.coefficients[0] - 0.5) <= 1e-15, "ridge hand fixture beta=0.5")
    c.check(abs(ridge_predict(m, [[11.0]])[0] - 5.5) <= 1e-12, "ridge hand fixture prediction")

    gaps = []
    for seed in range(6):
        prng = np.random.default_rng(100 + seed)
        n = int(prng.integers(5, 11))
        kernel = ("linear", "rbf", "poly")[seed % 3]
        X = prng.standard_normal((n, 1 + seed % 2))
        y = prng.standard_normal(n) * 2
        C, eps = float(prng.uniform(0.3, 3.0)), float(prng.uniform(0.0, 0.5))
        m = svr_fit(X, y, kernel, C=C, epsilon=eps, gamma=0.5, degree=2, coef0=1.0, tol=1e-6)
        K = kernel_matrix(X, X, kernel, 0.5, 2, 1.0)
        gaps.append(abs(svr_dual_objective(m, y) - dense_qp_dual(K, y, C, eps)))
    c.check(max(gaps) < 1e-4, f"SVR dual vs dense QP {max(gaps):.1e}")
    c.notes.append(f"{len(gaps)} QP problems, worst gap {max(gaps):.1e}")

    tol = 1e-3
    for kernel in ("linear", "rbf", "poly"):
        for seed in range(4):
            krng = np.random.default_rng(seed)
            X = krng.standard_normal((25, 4))
            y = X @ krng.standard_normal(4) + 0.5 * krng.standard_normal(25)
            C, eps = 1.5, 0.2
            m = svr_fit(X, y, kernel, C=C, epsilon=eps, tol=tol)
            d, r = m.dual_coefs, y - svr_predict(m, X)
            inside = (np.abs(d) > 0) & (np.abs(d) < C)
            ok = (m.converged and np.all(np.abs(d) <= C) and abs(d.sum()) < tol
                  and np.all(d[r > eps + tol] == C) and np.all(d[r < -eps - tol] == -C)
                  and np.all(d[np.abs(r) < eps - tol] == 0)
                  and np.allclose(np.abs(r[inside]), eps, atol=tol))
            c.check(ok, f"KKT {kernel} seed {seed}")
    c.finish(capsys)


# -- 4 ----------------------------------------------------------------------

def test_criterion_4_pca(capsys):
    c = Criterion(4, "PCA", 5)
    rng = np.random.default_rng(4)
    for _ in range(50):
        X = rng.normal(0, 5, (rng.integers(3, 30), rng.integers(2, 60)))
        k = min(X.shape[0] - 1, X.shape[1])
        m = pca_fit(X, k)
        c.check(np.abs(m.components @ m.components.T - np.eye(k)).max() <= 1e-8,
                "loadings orthonormal")
        c.check(np.all(np.diff(m.explained_variance) <= 1e-12 * m.explained_variance[0]),
                "explained variance non-increasing")
    X = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
    m = pca_fit(X, 2)
    vecs, lams = cov_eig_oracle(X)
    c.check(np.allclose(m.explained_variance, lams, atol=1e-12), "3x2 fixture variances")
    c.check(np.allclose(np.abs(m.components @ vecs.T), np.eye(2), atol=1e-12),
            "3x2 fixture loadings (up to sign)")
    c.check(np.allclose(m.components[0], vecs[0], atol=1e-12), "3x2 fixture first loading")
    c.finish(capsys)


# -- 5 ----------------------------------------------------------------------

def test_criterion_5_evaluation(capsys):
    c = Criterion(5, "evaluation", 30)
    for n in (4, 10, 46):
        X = np.arange(n * 2, dtype=float).reshape(n, 2)
        y = np.arange(n, dtype=float)
        held = []
        for i in range(n):
            _, y_train, X_test = fold_split(X, y, i)
            c.check(set(y_train.astype(int)) == set(range(n)) - {i}, f"fold {i} of {n}")
            held.append(int(X_test[0, 0]) // 2)
        c.check(sorted(held) == list(range(n)), f"held-out rows partition n={n}")
        ds = synthesize(SynthesisConfig(n_samples=n, seed=n))
        preds = loocv_run(ds, PipelineConfig(FeatureMethod.base(), 2, RidgeConfig(10.0)))
        c.check([p.fold_index for p in preds] == list(range(n))
                and [p.sample_id for p in preds] == list(ds.sample_ids),
                f"loocv predicts each sample once, n={n}")

    rng = np.random.default_rng(5)
    for _ in range(200):
        ref = rng.uniform(40, 400, rng.integers(2, 50))
        pred = ref + rng.normal(0, 20, ref.size)
        m = metrics_from_arrays(ref, pred)
        c.check(m.mae <= np.sqrt(m.mse) * (1 + 1e-12), "mae <= sqrt(mse)")
        s = rng.uniform(0.1, 10)
        ms = metrics_from_arrays(s * ref, s * pred)
        c.check(np.isclose(ms.mse, s * s * m.mse, rtol=1e-12)
                and np.isclose(ms.mae, s * m.mae, rtol=1e-12), "mse/mae scaling")
        mean = metrics_from_arrays(ref, np.full(ref.size, ref.mean()))
        c.check(abs(mean.r2) < 1e-12, "r2 = 0 for the mean predictor")

    for r, p, zone in CLARKE_FIXTURE:
        c.check(clarke_zones([r], [p])[0] == zone == clarke_oracle(r, p), f"Clarke ({r},{p})")
    for kind, zones in (("parkes1", PARKES1_ZONES), ("parkes2", PARKES2_ZONES)):
        for (r, p), zone in zip(PARKES_POINTS, zones):
            c.check(parkes_zones(kind, [r], [p])[0] == zone == parkes_oracle(kind, r, p),
                    f"{kind} ({r},{p})")
    c.notes.append(f"{len(CLARKE_FIXTURE)} Clarke and {len(PARKES_POINTS)} Parkes fixture points")

    ax = np.linspace(0, 550, 551)
    R, P = (v.ravel() for v in np.meshgrid(ax, ax))
    for kind in ("clarke", "parkes1", "parkes2"):
        if kind == "clarke":
            z = np.asarray(clarke_zones(np.maximum(R, 1), np.maximum(P, 1)))
        else:
            z = np.asarray(parkes_zones(kind, R, P))
        unassigned = int(np.count_nonzero(~np.isin(z, list("ABCDE"))))
        c.check(z.size == R.size and unassigned == 0, f"{kind}: {unassigned} unassigned")
    c.finish(capsys)


# -- 6 ----------------------------------------------------------------------

SEEDS = range(5)


def family_best(trace, kind, family):
    ok = [t for t in trace.trials if t.status == "ok" and t.method.kind == kind
          and t.model.family == family]
    return min(ok, key=lambda t: t.rank_key)


def test_criterion_6_directional(capsys):
    c = Criterion(6, "end-to-end directional", 900)
    tbd = default_search_space("tbd", "ridge")
    ridge = default_search_space("base", "ridge").models
    svr = default_search_space("base", "svr").models
    models = ridge + svr
    space = SearchSpace((FeatureMethod.base(),) + tbd.methods, tbd.pca_ks, models)
    wins = {"ridge": 0, "svr": 0}
    rows = []
    for seed in SEEDS:
        trace = grid_search(synthesize(SynthesisConfig(seed=seed)), space)
        cells = []
        for fam in ("ridge", "svr"):
            base = family_best(trace, "base", fam).mse
            best_tbd = family_best(trace, "tbd", fam).mse
            wins[fam] += best_tbd <= base
            cells.append(f"{fam} base {base:.1f} tbd {best_tbd:.1f}")
        rows.append(f"seed {seed}: " + ", ".join(cells))
        if seed == 0:
            adpd_space = SearchSpace(default_search_space("adpd", "ridge").methods,
                                     tbd.pca_ks, models)
            adpd = grid_search(synthesize(SynthesisConfig(seed=0)), adpd_space)
            for fam in ("ridge", "svr"):
                a, b = family_best(adpd, "adpd", fam).mse, family_best(trace, "base", fam).mse
                c.check(a <= b, f"ADPD-best {a:.3f} > Base-best {b:.3f} ({fam})")
    with capsys.disabled():
        print("\n" + "\n".join("  " + r for r in rows))
    for fam in ("ridge", "svr"):
        c.notes.append(f"{fam} TBD <= Base on {wins[fam]}/5 seeds")
        c.check(wins[fam] >= 4, f"{fam} below the 4-of-5 threshold")
    c.finish(capsys)


# -- 7 and 8 ----------------------------------------------------------------

TUNE = {"schema_version": 1, "synthesis": {"seed": 0},
        "search": {"method_family": "tbd", "model_family": ["ridge", "svr"]}}


@pytest.fixture(scope="module")
def tune_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance")
    (root / "tune.json").write_text(json.dumps(TUNE))
    start = time.perf_counter()
    codes = [main(["tune", "--config", str(root / "tune.json"), "--out", str(root / name)])
             for name in ("run1", "run2")]
    return root, codes, time.perf_counter() - start


def test_criterion_7_determinism(capsys, tune_runs):
    c = Criterion(7, "determinism", 900)
    root, codes, tune_seconds = tune_runs
    c.start -= tune_seconds
    c.check(codes == [0, 0], f"tune exit codes {codes}")
    for name in ("trace.csv", "best_config.json"):
        a, b = root / "run1" / name, root / "run2" / name
        c.check(a.exists() and a.read_bytes() == b.read_bytes(), f"{name} differs")
    rows = (root / "run1/trace.csv").read_text().count("\n") - 1
    c.notes.append(f"{rows} trials, trace and best config byte-identical")
    c.finish(capsys)


def test_criterion_8_cli_library_equivalence(capsys, tune_runs):
    c = Criterion(8, "CLI/library equivalence", 900)
    root, _, _ = tune_runs
    best_cfg = root / "run1/best_config.json"
    c.check(main(["evaluate", "--config", str(best_cfg)]) == 0, "evaluate exit code")
    cfg = load_run_config(best_cfg)
    report = json.loads((cfg.output_dir / "report.json").read_text())
    ds = synthesize(SynthesisConfig(seed=0))
    res = cross_validate(ds, PipelineConfig.from_dict(json.loads(best_cfg.read_text())))
    lib = res.metrics
    for name in ("mse", "mae", "rmse", "r2"):
        c.check(abs(report["metrics"][name] - getattr(lib, name)) <= 1e-12, f"{name} differs")
    errs = np.array([p["abs_error"] for p in report["points"]])
    c.check(np.abs(errs - lib.absolute_errors).max() <= 1e-12, "absolute errors differ")
    for kind in GridKind:
        counts = error_grid_report(kind, res.predictions).zone_counts
        c.check(report["error_grids"][kind.value]["zone_counts"] == counts,
                f"{kind.value} zone counts differ")
    _, via_lib, _ = run_evaluation(cfg)
    c.check(via_lib.metrics.mse == lib.mse, "run_evaluation differs from cross_validate")
    best = json.loads((root / "run1/best.json").read_text())
    c.check(report["metrics"]["mse"] == best["mse"],
            f"best-config re-run mse {report['metrics']['mse']!r} != {best['mse']!r}")
    c.notes.append(f"best trial {best['trial']} mse {best['mse']:.4f} reproduced")
    c.finish(capsys)
