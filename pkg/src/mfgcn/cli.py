"""Command-line entry point: ``mfgcn <subcommand> [flags]``.

Every subcommand prints one JSON object on success. Failures print
``{"error": ..., "message": ..., "stage": ...}`` to stderr and exit 1
(2 for usage errors, as argparse does).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import spectral
from .data import FeatureParams, load_cohort, load_manifest, write_cohort
from .experiment import (ExperimentConfig, StageError, ablate_cross_modality, ablation_to_json, new_run_dir,
                         run_experiment, write_rows)
from .metrics import evaluate as evaluate_metrics
from .metrics import predict_labels
from .model import MffbmModel
from .report import emit_report
from .synthetic import COHORTS
from .training import kfold_split, train

logger = logging.getLogger("mfgcn")

MAX_SPECTRUM_NODES = 32
SPECTRUM_COLUMNS = ["family", "n", "eigenvalue", "kernel", "numeric_response", "analytic_response", "abs_error"]


class CliError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


def _config(args) -> ExperimentConfig:
    doc = json.loads(Path(args.config).read_text()) if getattr(args, "config", None) else {}
    train_doc = dict(doc.get("train", {}))
    if getattr(args, "seed", None) is not None:
        train_doc["seed"] = args.seed
        doc.setdefault("model", {})["seed"] = args.seed
    if getattr(args, "folds", None) is not None:
        train_doc["k_folds"] = args.folds
    doc["train"] = train_doc
    if getattr(args, "modality", None):
        doc["modality"] = args.modality
    if getattr(args, "out", None):
        doc["out_dir"] = args.out
    if getattr(args, "parallel_folds", False):
        doc["parallel_folds"] = True
    return ExperimentConfig(**doc)


def _need(args, name: str):
    value = getattr(args, name, None)
    if value is None:
        raise CliError("arguments", f"--{name.replace('_', '-')} is required for {args.command}")
    return value


def _load(args, cfg: ExperimentConfig):
    manifest = load_manifest(_need(args, "manifest"))
    return manifest, load_cohort(manifest, cfg.model.modalities, cfg.features)


# --- subcommands -----------------------------------------------------------

def cmd_make_synthetic(args) -> dict:
    kwargs = {"seed": args.seed if args.seed is not None else 0}
    if args.n is not None:
        kwargs["n_subjects"] = args.n
    cohort = COHORTS[args.cohort](**kwargs)
    path = write_cohort(cohort, _need(args, "out"))
    return {"manifest": str(path), "subjects": len(cohort), "cohort": cohort.name}


def cmd_extract_features(args) -> dict:
    cfg = _config(args)
    _, cohort = _load(args, cfg)
    path = write_cohort(cohort, _need(args, "out"))
    return {"manifest": str(path), "subjects": len(cohort),
            "features": {m: len(v) for m, v in cohort.feature_names.items()}}


def cmd_train(args) -> dict:
    """Fit one model on every subject of the manifest and save a checkpoint."""
    cfg = _config(args)
    _, cohort = _load(args, cfg)
    run = new_run_dir(cfg.out_dir, f"train-{cfg.modality}")
    (run / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    model = MffbmModel(cfg.model, cohort.feature_dims())
    labels = cohort.labels(cfg.train.task)
    model, history = train(model, {m: cohort.features[m] for m in cfg.model.modalities}, labels, cfg.train, cohort.ids)
    model.save(run / "checkpoint.json")
    probs = model.predict_proba(model.prepare(cohort.features, cohort.ids))
    report = evaluate_metrics(labels, predict_labels(probs), probs, n_classes=cfg.train.n_classes)
    (run / "train_metrics.json").write_text(json.dumps(report.to_dict(), indent=2))
    (run / "history.json").write_text(json.dumps(history))
    (run / "COMPLETED").write_text("")
    return {"run_dir": str(run), "epochs": len(history), "train_accuracy": report.accuracy}


def cmd_evaluate(args) -> dict:
    """Cross-validated protocol, or scoring of a saved checkpoint with --checkpoint."""
    cfg = _config(args)
    if args.checkpoint:
        model = MffbmModel.load(args.checkpoint)
        manifest = load_manifest(_need(args, "manifest"))
        cohort = load_cohort(manifest, model.cfg.modalities, cfg.features)
        probs = model.predict_proba(model.prepare(cohort.features, cohort.ids))
        n_classes = model.cfg.n_classes
        task = "binary" if n_classes == 2 else "three_class"
        report = evaluate_metrics(cohort.labels(task), predict_labels(probs), probs, n_classes=n_classes)
        run = new_run_dir(cfg.out_dir, "score")
        (run / "metrics.json").write_text(json.dumps({"summary": {**report.weighted, "accuracy": report.accuracy},
                                                       "pooled": report.to_dict()}, indent=2))
        write_rows(run / "roc.csv", report.roc_rows(), ["class", "fpr", "tpr", "threshold"])
        (run / "COMPLETED").write_text("")
        return {"run_dir": str(run), "accuracy": report.accuracy, "weighted": report.weighted}
    manifest = load_manifest(_need(args, "manifest"))
    run = run_experiment(manifest, cfg)
    summary = json.loads((run / "metrics.json").read_text())["summary"]
    return {"run_dir": str(run), "summary": summary}


def cmd_ablate(args) -> dict:
    cfg = _config(args)
    _, cohort = _load(args, cfg)
    run = new_run_dir(cfg.out_dir, "ablate")
    (run / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    folds = kfold_split(cohort.ids, cfg.train.k_folds, cfg.train.seed, cohort.labels(cfg.train.task))
    doc = ablation_to_json(ablate_cross_modality(cohort, cfg.model, cfg.train, folds))
    (run / "ablation.json").write_text(json.dumps(doc, indent=2))
    (run / "COMPLETED").write_text("")
    return {"run_dir": str(run), "f2": {arm: v["summary"]["f2"] for arm, v in doc["arms"].items()}}


def cmd_analyze_spectrum(args) -> dict:
    if not 1 <= args.n <= MAX_SPECTRUM_NODES:
        raise CliError("arguments", f"n must lie in [1, {MAX_SPECTRUM_NODES}], got {args.n}")
    graph = spectral.make_graph(args.family, args.n, args.p, args.graph_seed)
    kernels = args.kernels.split(",") if args.kernels else list(spectral.KERNELS)
    if not args.kernels and graph.regular_degree() in (None, 0):
        kernels.remove("gcn_regular")
    rows = [{"family": args.family, "n": args.n, **r} for r in spectral.analyze(graph, kernels, args.phi, args.a)]
    out = Path(_need(args, "out"))
    if out.suffix.lower() != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / f"spectrum-{args.family}-{args.n}.csv"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    write_rows(out, rows, SPECTRUM_COLUMNS)
    return {"csv": str(out), "rows": len(rows), "max_abs_error": max(r["abs_error"] for r in rows)}


def cmd_report(args) -> dict:
    return emit_report(_need(args, "run"))


COMMANDS = {
    "extract-features": cmd_extract_features,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "analyze-spectrum": cmd_analyze_spectrum,
    "make-synthetic": cmd_make_synthetic,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mfgcn", description="Multi-frequency graph fusion: training, evaluation and spectral checks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def experiment_flags(sp):
        sp.add_argument("--manifest")
        sp.add_argument("--config", help="JSON file with train/model/features sections")
        sp.add_argument("--out", help="base directory for run outputs")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--modality", choices=["ensemble", "audio", "video", "gaze"])
        sp.add_argument("--folds", type=int)
        sp.add_argument("--parallel-folds", action="store_true")

    for name in ("extract-features", "train", "evaluate", "ablate"):
        sp = sub.add_parser(name)
        experiment_flags(sp)
        if name == "evaluate":
            sp.add_argument("--checkpoint", help="score a saved model instead of cross-validating")

    sp = sub.add_parser("analyze-spectrum")
    sp.add_argument("--family", required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--kernels", help="comma-separated subset of " + ",".join(spectral.KERNELS))
    sp.add_argument("--phi", type=float, default=0.5)
    sp.add_argument("--a", type=float, default=0.5)
    sp.add_argument("--p", type=float, default=0.4, help="edge probability for erdos_renyi")
    sp.add_argument("--graph-seed", type=int, default=7)
    sp.add_argument("--out", required=True, help="CSV path or directory")

    sp = sub.add_parser("make-synthetic")
    sp.add_argument("--cohort", choices=sorted(COHORTS), default="separable")
    sp.add_argument("--n", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("report")
    sp.add_argument("--run", required=True, help="run directory")
    return p


def _default(o):
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        result = COMMANDS[args.command](args)
    except Exception as exc:  # every failure becomes one JSON line
        stage = getattr(exc, "stage", args.command)
        cause = exc.cause if isinstance(exc, StageError) else exc
        err = {"error": type(cause).__name__, "message": str(cause), "stage": stage, "command": args.command}
        if args.verbose:
            err["traceback"] = traceback.format_exc()
        print(json.dumps(err), file=sys.stderr)
        return 1
    print(json.dumps(result, default=_default))
    return 0


if __name__ == "__main__":
    sys.exit(main())
