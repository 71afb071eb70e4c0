"""Command-line front end: ``mirglucose {synth,preprocess,evaluate,tune,compare}``.

Every subcommand reads a JSON run config (``--config``)::

    {
      "schema_version": 1,
      "data": {"spectra": "spectra.csv", "labels": "labels.csv"},
      "synthesis": {"n_samples": 46, "seed": 0},
      "preprocess": {"savgol": {"window": 101, "polyorder": 2}},
      "method": {"kind": "tbd", "tau": 0.1},
      "pca_k": 10,
      "model": {"family": "svr", "kernel": "rbf", "C": 1.0, "epsilon": 0.1},
      "search": {"method_family": "tbd", "model_family": "ridge"},
      "runs": ["eval_a.json", "eval_b.json"],
      "output_dir": "out"
    }

Exactly one of ``data`` and ``synthesis`` names the dataset (``synth`` needs
``synthesis``). ``evaluate`` needs ``method``/``pca_k``/``model``, ``tune``
needs ``search``, ``compare`` needs ``runs``. Relative paths resolve against
the config file's directory.

Exit codes: 0 success, 2 invalid config or arguments, 3 pipeline failure
(including a search in which every trial failed), 4 file I/O failure.
``SPECTRO_LOG`` sets the log level (default ``WARNING``).
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import PipelineConfig, cross_validate
from .evaluation.report import (GRID_KINDS, ae_csv_text, ae_distribution, error_grid_svg,
                                evaluation_report, points_csv_text, report_json,
                                scatter_csv_text)
from .features import FeatureMethod, feature_values
from .mlcore import model_config_from_dict
from .preprocess import PreprocessConfig, chain_stages, derivative_values, preprocess_chain
from .spectra import (SpectralDataset, SpectrumKind, SynthesisConfig, atomic_write_text,
                      ingest_csv, synthesize, write_csv)
from .tuning import (SearchSpace, default_search_space, grid_search, trace_csv_text)

log = logging.getLogger("mirglucose")

SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PIPELINE = 3
EXIT_IO = 4


class ConfigError(ValueError):
    """The run config is malformed or inconsistent."""


class PipelineError(RuntimeError):
    """A pipeline stage failed on valid configuration."""


# --------------------------------------------------------------------------
# run config
# --------------------------------------------------------------------------


def _line_of(text: str, key: str) -> str:
    needle = f'"{key}"'
    for no, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return f"line {no}: "
    return ""


@dataclasses.dataclass
class RunConfig:
    path: Path
    raw: bytes
    doc: dict
    base_dir: Path
    output_dir: Path
    threads: int = 1

    @property
    def text(self) -> str:
        return self.raw.decode("utf-8")

    def error(self, key: str, msg: str) -> ConfigError:
        return ConfigError(f"{self.path}: {_line_of(self.text, key)}{key}: {msg}")

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else (self.base_dir / p)

    @property
    def config_sha256(self) -> str:
        return hashlib.sha256(self.raw).hexdigest()


def load_run_config(path, out=None, seed=None, threads=None) -> RunConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: config is not UTF-8 ({exc.reason})") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: line 1: config must be a JSON object")
    base = path.resolve().parent
    cfg = RunConfig(path, raw, doc, base, base / "out")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise cfg.error("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")
    if "data" in doc and "synthesis" in doc:
        raise cfg.error("synthesis", "give either 'data' or 'synthesis', not both")
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {seed}")
        if "synthesis" in doc:
            doc["synthesis"] = dict(doc["synthesis"], seed=seed)
    cfg.output_dir = Path(out) if out is not None else cfg.resolve(doc.get("output_dir", "out"))
    t = threads if threads is not None else doc.get("threads", 1)
    if not isinstance(t, int) or t < 1:
        raise cfg.error("threads", f"must be a positive integer, got {t!r}")
    cfg.threads = t
    return cfg


def synthesis_config(cfg: RunConfig) -> SynthesisConfig:
    d = cfg.doc.get("synthesis")
    if not isinstance(d, dict):
        raise cfg.error("synthesis", "must be an object of generator settings")
    try:
        return SynthesisConfig(**d)
    except (TypeError, ValueError) as exc:
        raise cfg.error("synthesis", str(exc)) from None


def synthesis_dict(sc: SynthesisConfig) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(sc)))


def load_dataset(cfg: RunConfig) -> SpectralDataset:
    if "synthesis" in cfg.doc:
        sc = synthesis_config(cfg)
        try:
            return synthesize(sc)
        except ValueError as exc:
            raise PipelineError(f"synthesis: {exc}") from None
    data = cfg.doc.get("data")
    if not isinstance(data, dict) or not {"spectra", "labels"} <= set(data):
        raise cfg.error("data", "needs 'spectra' and 'labels' paths (or use 'synthesis')")
    return ingest_csv(cfg.resolve(data["spectra"]), cfg.resolve(data["labels"]))


def preprocess_config(cfg: RunConfig) -> PreprocessConfig:
    try:
        return PreprocessConfig(**cfg.doc.get("preprocess", {}))
    except (TypeError, ValueError) as exc:
        raise cfg.error("preprocess", str(exc)) from None


def pipeline_config(cfg: RunConfig) -> PipelineConfig:
    for key in ("method", "model"):
        if key not in cfg.doc:
            raise cfg.error(key, "required by evaluate")
    try:
        method = FeatureMethod.from_dict(cfg.doc["method"])
    except (KeyError, TypeError, ValueError) as exc:
        raise cfg.error("method", str(exc)) from None
    try:
        model = model_config_from_dict(cfg.doc["model"])
    except (KeyError, TypeError, ValueError) as exc:
        raise cfg.error("model", str(exc)) from None
    try:
        return PipelineConfig(method, cfg.doc.get("pca_k", 10), model, preprocess_config(cfg))
    except ValueError as exc:
        raise cfg.error("pca_k", str(exc)) from None


def search_space(cfg: RunConfig) -> SearchSpace:
    d = cfg.doc.get("search")
    if not isinstance(d, dict):
        raise cfg.error("search", "required by tune")
    try:
        if "methods" in d:
            return SearchSpace.from_dict(d)
        d = dict(d)
        fam_m = d.pop("method_family")
        fam_r = d.pop("model_family")
        families = fam_r if isinstance(fam_r, list) else [fam_r]
        spaces = [default_search_space(fam_m, f, **d) for f in families]
        models = [m for s in spaces for m in s.models]
        return SearchSpace(spaces[0].methods, spaces[0].pca_ks, models)
    except (KeyError, TypeError, ValueError) as exc:
        raise cfg.error("search", str(exc)) from None


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------


class Outputs:
    """Tracks files written under one output directory for the manifest."""

    def __init__(self, root: Path):
        self.root = root
        self.files = []
        try:
            root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {root}: {exc.strerror}") from None

    def write(self, rel: str, text: str) -> Path:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        atomic_write_text(path, text)
        self.files.append(rel)
        return path

    def adopt(self, rel: str):
        self.files.append(rel)

    def manifest(self, command: str, cfg: RunConfig, started: str) -> dict:
        inventory = []
        for rel in sorted(set(self.files)):
            data = (self.root / rel).read_bytes()
            inventory.append({"path": rel, "bytes": len(data),
                              "sha256": hashlib.sha256(data).hexdigest()})
        effective = json.dumps(cfg.doc, sort_keys=True, separators=(",", ":")).encode()
        return {"artifact": "mirglucose", "artifact_version": __version__, "command": command,
                "config_path": str(cfg.path), "config_sha256": cfg.config_sha256,
                "effective_config_sha256": hashlib.sha256(effective).hexdigest(),
                "started_utc": started, "finished_utc": _now(), "files": inventory}

    def finish(self, command: str, cfg: RunConfig, started: str):
        atomic_write_text(self.root / "manifest.json",
                          json.dumps(self.manifest(command, cfg, started), indent=1) + "\n")


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def dump_stages(out: Outputs, dataset: SpectralDataset, pre: PreprocessConfig,
                method: FeatureMethod | None):
    """One CSV per sample with every intermediate spectrum of the chain."""
    w = dataset.grid.wavenumbers
    for sid, row in zip(dataset.sample_ids, dataset.values):
        stages = chain_stages(row, w, pre)
        final = list(stages.values())[-1]
        stages["derivative"] = derivative_values(final, dataset.grid.step)
        if method is not None:
            stages[f"feature_{method.kind}"] = feature_values(
                final[None, :], dataset.grid.step, method, stages["derivative"][None, :])[0]
        names = list(stages)
        lines = [",".join(["wavenumber"] + names)]
        for i, wn in enumerate(w):
            lines.append(",".join([repr(float(wn))] + [repr(float(stages[k][i])) for k in names]))
        out.write(f"stages/{sid}.csv", "\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_synth(cfg: RunConfig, args) -> int:
    started = _now()
    sc = synthesis_config(cfg)
    try:
        ds = synthesize(sc)
    except ValueError as exc:
        raise PipelineError(f"synthesis: {exc}") from None
    out = Outputs(cfg.output_dir)
    write_csv(ds, out.root / "spectra.csv", out.root / "labels.csv")
    out.adopt("spectra.csv")
    out.adopt("labels.csv")
    out.write("synthesis.json", _dump_json(synthesis_dict(sc)))
    out.finish("synth", cfg, started)
    print(f"wrote {len(ds)} synthetic spectra to {out.root}")
    return EXIT_OK


def cmd_preprocess(cfg: RunConfig, args) -> int:
    started = _now()
    ds = load_dataset(cfg)
    pre = preprocess_config(cfg)
    try:
        prepared = preprocess_chain(ds, pre)
    except ValueError as exc:
        raise PipelineError(f"preprocess: {exc}") from None
    out = Outputs(cfg.output_dir)
    write_csv(prepared, out.root / "preprocessed.csv", out.root / "labels.csv")
    out.adopt("preprocessed.csv")
    out.adopt("labels.csv")
    if args.dump_stages:
        method = FeatureMethod.from_dict(cfg.doc["method"]) if "method" in cfg.doc else None
        dump_stages(out, ds, pre, method)
    out.finish("preprocess", cfg, started)
    print(f"preprocessed {len(prepared)} spectra into {out.root}")
    return EXIT_OK


def run_evaluation(cfg: RunConfig, dataset: SpectralDataset | None = None):
    """Library calls behind ``evaluate``; returns ``(pipeline, result, report)``."""
    pipe = pipeline_config(cfg)
    ds = dataset if dataset is not None else load_dataset(cfg)
    try:
        result = cross_validate(ds, pipe, threads=cfg.threads)
    except ValueError as exc:
        raise PipelineError(f"evaluate: {exc}") from None
    except RuntimeError as exc:
        raise PipelineError(f"evaluate: {exc}") from None
    return pipe, result, evaluation_report(result)


def cmd_evaluate(cfg: RunConfig, args) -> int:
    started = _now()
    pipe, result, report = run_evaluation(cfg)
    out = Outputs(cfg.output_dir)
    out.write("report.json", report_json(report) + "\n")
    out.write("points.csv", points_csv_text(report))
    out.write("scatter.csv", scatter_csv_text(report))
    out.write("abs_errors.csv", ae_csv_text(report))
    out.write("abs_error_summary.json", _dump_json(ae_distribution(report)))
    ref = [p["reference"] for p in report["points"]]
    pred = [p["predicted"] for p in report["points"]]
    for kind in GRID_KINDS:
        out.write(f"grid_{kind.value}.svg", error_grid_svg(kind, ref, pred))
    if args.dump_stages:
        dump_stages(out, load_dataset(cfg), pipe.preprocess, pipe.method)
    out.finish("evaluate", cfg, started)
    m = report["metrics"]
    r2 = "undefined" if m["r2"] is None else f"{m['r2']:.4f}"
    print(f"{pipe.label}: MSE {m['mse']:.4f}  MAE {m['mae']:.4f}  R2 {r2}  "
          f"outside Clarke A {report['error_grids']['clarke']['outside_a']}")
    return EXIT_OK


def best_config_doc(cfg: RunConfig, pipe: PipelineConfig) -> dict:
    """A run config for ``evaluate`` reproducing the best trial on the same data."""
    doc = {"schema_version": SCHEMA_VERSION}
    if "synthesis" in cfg.doc:
        doc["synthesis"] = synthesis_dict(synthesis_config(cfg))
    else:
        data = cfg.doc["data"]
        doc["data"] = {"spectra": str(cfg.resolve(data["spectra"]).resolve()),
                       "labels": str(cfg.resolve(data["labels"]).resolve())}
    d = pipe.to_dict()
    doc.update(method=d["method"], pca_k=d["pca_k"], model=d["model"],
               preprocess=d["preprocess"], output_dir="best_eval")
    return doc


def cmd_tune(cfg: RunConfig, args) -> int:
    started = _now()
    space = search_space(cfg)
    pre = preprocess_config(cfg)
    ds = load_dataset(cfg)
    try:
        trace = grid_search(ds, space, pre, threads=cfg.threads)
    except ValueError as exc:
        raise PipelineError(f"tune: {exc}") from None
    out = Outputs(cfg.output_dir)
    out.write("trace.csv", trace_csv_text(trace))
    counts = {s: sum(t.status == s for t in trace.trials) for s in ("ok", "skipped", "error")}
    if trace.best is None:
        out.finish("tune", cfg, started)
        print(f"all {counts['error']} evaluated trials failed; see trace.csv", file=sys.stderr)
        return EXIT_PIPELINE
    pipe = trace.best_pipeline()
    out.write("best_config.json", _dump_json(best_config_doc(cfg, pipe)))
    best = trace.best
    out.write("best.json", _dump_json({
        "trial": best.index, "label": pipe.label, "mse": best.metrics.mse,
        "mae": best.metrics.mae, "r2": best.metrics.r2, "rmse": best.metrics.rmse,
        "trial_counts": counts}))
    out.finish("tune", cfg, started)
    print(f"best of {len(trace.trials)} trials: {pipe.label}  MSE {best.metrics.mse:.4f}  "
          f"({counts['ok']} ok, {counts['skipped']} skipped, {counts['error']} failed)")
    return EXIT_OK


def compare_tables(reports: list) -> tuple:
    """Metric and outside-zone-A matrices, one column per run report."""
    labels = [r["label"] for r in reports]
    metrics = {name: [r["metrics"][name] for r in reports] for name in ("mse", "mae", "r2")}
    zones = {k.value: [r["error_grids"][k.value]["outside_a"] for r in reports]
             for k in GRID_KINDS}
    return labels, metrics, zones


def _table_csv(labels, rows) -> str:
    lines = [",".join(["quantity"] + [f'"{lb}"' for lb in labels])]
    for name, vals in rows.items():
        lines.append(",".join([name] + ["undefined" if v is None else repr(v) for v in vals]))
    return "\n".join(lines) + "\n"


def _table_text(labels, rows, fmt) -> str:
    head = ["quantity"] + [f"run {i + 1}" for i in range(len(labels))]
    body = [[name] + ["undefined" if v is None else fmt(v) for v in vals]
            for name, vals in rows.items()]
    widths = [max(len(r[c]) for r in [head] + body) for c in range(len(head))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(r, widths)) for r in [head] + body]
    lines += [""] + [f"run {i + 1}: {lb}" for i, lb in enumerate(labels)]
    return "\n".join(lines) + "\n"


def cmd_compare(cfg: RunConfig, args) -> int:
    started = _now()
    runs = cfg.doc.get("runs")
    if not isinstance(runs, list) or len(runs) < 2:
        raise cfg.error("runs", "compare needs a list of at least 2 evaluate configs")
    reports = []
    for r in runs:
        sub = load_run_config(cfg.resolve(r))
        path = sub.output_dir / "report.json"
        try:
            reports.append(json.loads(path.read_text("utf-8")))
        except OSError:
            raise PipelineError(f"missing run output {path}; run 'evaluate' on {r} first") from None
    labels, metrics, zones = compare_tables(reports)
    out = Outputs(cfg.output_dir)
    out.write("metrics_table.csv", _table_csv(labels, metrics))
    out.write("outside_a_table.csv", _table_csv(labels, zones))
    text = ("Regression metrics\n" + _table_text(labels, metrics, lambda v: f"{v:.4f}")
            + "\nPoints outside zone A\n" + _table_text(labels, zones, str))
    out.write("comparison.txt", text)
    out.finish("compare", cfg, started)
    print(text, end="")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "preprocess": cmd_preprocess, "evaluate": cmd_evaluate,
            "tune": cmd_tune, "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mirglucose", description="Glucose-from-MIR-spectra pipeline.",
        epilog="exit codes: 0 ok, 2 config error, 3 pipeline error, 4 I/O error")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"synth": "write a seeded synthetic dataset",
             "preprocess": "run the preprocessing chain and write absorbance spectra",
             "evaluate": "leave-one-out evaluation of one pipeline configuration",
             "tune": "grid search by leave-one-out MSE",
             "compare": "tabulate metrics of several evaluated runs"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="run config JSON")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--seed", type=int, help="synthesis seed (overrides the config)")
        p.add_argument("--threads", type=int, help="worker threads")
        p.add_argument("--dump-stages", action="store_true",
                       help="write every preprocessing and feature stage per sample")
    return parser


def configure_logging():
    level = os.environ.get("SPECTRO_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config, args.out, args.seed, args.threads)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # malformed input data (spectra files) is a pipeline failure
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
