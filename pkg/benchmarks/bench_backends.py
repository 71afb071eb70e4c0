"""Time the numba and pure-numpy kernel flavours against each other.

Usage::

    python3 benchmarks/bench_backends.py [--repeat 5] [--end-to-end]

Kernel timings call both flavours in-process (compilation is excluded by a
warm-up call). ``--end-to-end`` additionally runs one LOOCV evaluation in a
subprocess per backend, selected with ``MIRGLUCOSE_BACKEND``.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from mirglucose import _kernels as k

E2E_SNIPPET = """
import time
from mirglucose.spectra import SynthesisConfig, synthesize
from mirglucose.evaluation import PipelineConfig, cross_validate
from mirglucose.features import FeatureMethod
from mirglucose.mlcore import SvrConfig
ds = synthesize(SynthesisConfig())
cfg = PipelineConfig(FeatureMethod.tbd(0.1), 10, SvrConfig("linear", 1.0, 0.1))
cross_validate(ds, cfg)
t = time.perf_counter()
r = cross_validate(ds, cfg)
print(time.perf_counter() - t, r.metrics.mse)
"""


def best_of(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def workloads(rng):
    n, p = 45, 20
    X = rng.standard_normal((n, p))
    y = X @ rng.standard_normal(p) + 0.1 * rng.standard_normal(n)
    K_rbf = k._gram_numpy(X, X, 1, 1.0 / p, 3, 0.0)
    K_lin = k._gram_numpy(X, X, 0, 1.0, 3, 0.0)
    Kq = k._gram_numpy(X, X[:5], 0, 1.0, 3, 0.0)
    Cs = np.linspace(0.1, 2.0, 10)
    es = np.full(10, 0.1)
    w = np.arange(3601.0)
    s = np.sin(w / 300.0) + 0.01 * rng.standard_normal(w.size)
    poly_args = _parkes_args(rng)
    return {
        "lower_hull (3601 pts)": ((k._lower_hull_numba, k._lower_hull_numpy), (w, s)),
        "gram rbf (45x20)": ((k._gram_numba, k._gram_numpy), (X, X, 1, 1.0 / p, 3, 0.0)),
        "smo rbf (45 pts)": ((k._smo_numba, k._smo_numpy), (K_rbf, y, 1.0, 0.1, 1e-3, 100000)),
        "svr exact linear": ((k._svr_exact_numba, k._svr_exact_numpy),
                             (K_lin, y, 1.0, 0.1, 1e-3, 100000)),
        "svr batch linear x10": ((k._svr_batch_numba, k._svr_batch_numpy),
                                 (K_lin, y, Kq, Cs, es, 1e-3, 100000, True)),
        "polygon zones (10k pts)": ((k._polygon_zones_numba, k._polygon_zones_numpy), poly_args),
    }


def _parkes_args(rng):
    from mirglucose.evaluation.errorgrid import parkes_polygons

    vx, vy, starts, codes, _ = parkes_polygons("parkes1")
    pts = rng.uniform(0, 550, size=(2, 10000))
    return pts[0], pts[1], vx, vy, starts, codes


def end_to_end():
    print("\nend-to-end LOOCV (46 samples, TBD + PCA 10 + SVR linear)")
    for backend in ("numba", "numpy"):
        env = dict(os.environ, MIRGLUCOSE_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", E2E_SNIPPET], env=env, check=True,
                             capture_output=True, text=True).stdout.split()
        print(f"  {backend:6s} {float(out[0]):8.3f} s   mse {out[1]}")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--end-to-end", action="store_true")
    args = parser.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':26s} {'numba ms':>10s} {'numpy ms':>10s} {'speed-up':>9s}")
    for name, ((fast, slow), fargs) in workloads(rng).items():
        tf = best_of(fast, fargs, args.repeat)
        ts = best_of(slow, fargs, args.repeat)
        print(f"{name:26s} {1e3 * tf:10.3f} {1e3 * ts:10.3f} {ts / tf:8.1f}x")
    if args.end_to_end:
        end_to_end()


if __name__ == "__main__":
    main()
