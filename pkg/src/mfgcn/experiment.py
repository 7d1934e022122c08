"""Cross-validated experiments, the cross-modality ablation and run directories."""

from __future__ import annotations

import csv
import json
import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data import Cohort, DatasetManifest, FeatureParams, load_cohort
from .metrics import RATE_NAMES, MetricsReport, evaluate, predict_labels
from .model import MODALITIES, MffbmConfig, MffbmModel
from .training import FoldSplit, TrainConfig, kfold_split, train

logger = logging.getLogger(__name__)

SUMMARY_KEYS = RATE_NAMES + ("accuracy",)


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExperimentConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    model: MffbmConfig = field(default_factory=MffbmConfig)
    features: FeatureParams = field(default_factory=FeatureParams)
    modality: str = "ensemble"
    out_dir: str = "runs"
    parallel_folds: bool = False

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if isinstance(self.model, dict):
            self.model = MffbmConfig(**self.model)
        if isinstance(self.features, dict):
            self.features = FeatureParams(**self.features)
        if self.modality not in ("ensemble",) + MODALITIES:
            raise ValueError(f"modality must be ensemble, audio, video or gaze, got {self.modality!r}")
        mods = MODALITIES if self.modality == "ensemble" else (self.modality,)
        self.model = _with(self.model, modalities=mods, n_classes=self.train.n_classes)

    def to_dict(self) -> dict:
        return {"train": self.train.to_dict(), "model": self.model.to_dict(), "features": asdict(self.features),
                "modality": self.modality, "out_dir": self.out_dir, "parallel_folds": self.parallel_folds}

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls(**json.loads(Path(path).read_text()))


def _with(cfg: MffbmConfig, **changes) -> MffbmConfig:
    d = cfg.to_dict()
    d.update(changes)
    return MffbmConfig(**d)


@dataclass
class FoldResult:
    split: FoldSplit
    report: MetricsReport
    probs: np.ndarray
    history: list


@dataclass
class CvResult:
    folds: list
    pooled: MetricsReport
    summary: dict

    def per_fold_rows(self) -> list:
        return [{"fold": f.split.index, **{k: _metric(f.report, k) for k in SUMMARY_KEYS}} for f in self.folds]


def _metric(r: MetricsReport, key: str) -> float:
    return r.accuracy if key == "accuracy" else r.weighted[key]


def _run_fold(cohort: Cohort, split: FoldSplit, model_cfg: MffbmConfig, train_cfg: TrainConfig) -> FoldResult:
    task = train_cfg.task
    tr, te = cohort.subset(split.train), cohort.subset(split.test)
    fold_seed = train_cfg.seed * 1000 + split.index
    model = MffbmModel(_with(model_cfg, seed=fold_seed), cohort.feature_dims())
    cfg = TrainConfig(**{**train_cfg.to_dict(), "seed": fold_seed})
    model, history = train(model, {m: tr.features[m] for m in model_cfg.modalities}, tr.labels(task), cfg, tr.ids)
    probs = model.predict_proba(model.prepare({m: te.features[m] for m in model_cfg.modalities}, te.ids))
    report = evaluate(te.labels(task), predict_labels(probs), probs, n_classes=train_cfg.n_classes)
    return FoldResult(split, report, probs, history)


def run_cv(cohort: Cohort, model_cfg: MffbmConfig, train_cfg: TrainConfig, folds: Optional[list] = None,
           parallel: bool = False) -> CvResult:
    """Train and test one model per fold; summary metrics are means over folds."""
    labels = cohort.labels(train_cfg.task)
    if folds is None:
        folds = kfold_split(cohort.ids, train_cfg.k_folds, train_cfg.seed, labels)
    if parallel:
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(_run_fold, [cohort] * len(folds), folds, [model_cfg] * len(folds),
                                    [train_cfg] * len(folds)))
    else:
        results = [_run_fold(cohort, f, model_cfg, train_cfg) for f in folds]
    pos = {s: i for i, s in enumerate(cohort.ids)}
    probs = np.zeros((len(cohort), train_cfg.n_classes))
    for r in results:
        probs[[pos[s] for s in r.split.test]] = r.probs
    pooled = evaluate(labels, predict_labels(probs), probs, n_classes=train_cfg.n_classes)
    summary = {k: float(np.mean([_metric(r.report, k) for r in results])) for k in SUMMARY_KEYS}
    return CvResult(results, pooled, summary)


def ablate_cross_modality(cohort: Cohort, model_cfg: MffbmConfig, train_cfg: TrainConfig,
                          folds: Optional[list] = None) -> dict:
    """Full model vs the same model with the graph trunk removed, on identical folds and seeds."""
    if folds is None:
        folds = kfold_split(cohort.ids, train_cfg.k_folds, train_cfg.seed, cohort.labels(train_cfg.task))
    with_arm = run_cv(cohort, model_cfg, train_cfg, folds)
    without_arm = run_cv(cohort, _with(model_cfg, n_layers=0), train_cfg, folds)
    return {
        "folds": [{"index": f.index, "train": list(f.train), "test": list(f.test)} for f in folds],
        "arms": {"with_cross_modality": with_arm, "without_cross_modality": without_arm},
    }


def ablation_to_json(result: dict) -> dict:
    return {"folds": result["folds"],
            "arms": {k: {"summary": v.summary, "pooled": v.pooled.to_dict(), "per_fold": v.per_fold_rows()}
                     for k, v in result["arms"].items()}}


# --- run directories -------------------------------------------------------

def new_run_dir(base, tag: str) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    path = Path(base) / f"{tag}-{stamp}"
    i = 1
    while path.exists():
        path = Path(base) / f"{tag}-{stamp}-{i}"
        i += 1
    path.mkdir(parents=True)
    return path


def write_cv_outputs(run: Path, cv: CvResult, cfg: ExperimentConfig) -> None:
    (run / "metrics.json").write_text(json.dumps({
        "summary": cv.summary,
        "pooled": cv.pooled.to_dict(),
        "folds": [{"fold": f.split.index, **f.report.to_dict()} for f in cv.folds],
    }, indent=2))
    (run / "folds.json").write_text(json.dumps(
        [{"index": f.split.index, "train": list(f.split.train), "test": list(f.split.test)} for f in cv.folds], indent=2))
    write_rows(run / "roc.csv", cv.pooled.roc_rows(), ["class", "fpr", "tpr", "threshold"])
    write_rows(run / "per_fold.csv", cv.per_fold_rows(), ["fold"] + list(SUMMARY_KEYS))
    (run / "history.json").write_text(json.dumps({f.split.index: f.history for f in cv.folds}))


def write_rows(path, rows: list, columns: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({c: repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns})


def run_experiment(manifest: DatasetManifest, cfg: ExperimentConfig, cohort: Optional[Cohort] = None) -> Path:
    """Full protocol into a fresh run directory; on failure a FAILED marker names the stage."""
    run = new_run_dir(cfg.out_dir, f"run-{cfg.modality}")
    (run / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2))
    stage = "features"
    try:
        if cohort is None:
            cohort = load_cohort(manifest, cfg.model.modalities, cfg.features)
        stage = "cross-validation"
        cv = run_cv(cohort, cfg.model, cfg.train, parallel=cfg.parallel_folds)
        stage = "write outputs"
        write_cv_outputs(run, cv, cfg)
    except Exception as exc:
        (run / "FAILED").write_text(json.dumps({"stage": stage, "error": str(exc),
                                                 "traceback": traceback.format_exc()}, indent=2))
        raise StageError(stage, exc) from exc
    (run / "COMPLETED").write_text("")
    return run
