"""Human-readable summaries and figure data for finished run directories."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiment import SUMMARY_KEYS, write_rows  # noqa: E402


def _read_csv(path: Path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _boxplot_rows(per_fold: list, arm: str = "") -> list:
    rows = []
    for key in SUMMARY_KEYS:
        for r in per_fold:
            rows.append({"arm": arm, "metric": key, "fold": int(r["fold"]), "value": float(r[key])})
    return rows


def _roc_svg(roc_rows: list, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    for c in sorted({r["class"] for r in roc_rows}):
        pts = [r for r in roc_rows if r["class"] == c]
        ax.plot([p["fpr"] for p in pts], [p["tpr"] for p in pts], drawstyle="default", label=f"class {c}")
    ax.plot([0, 1], [0, 1], ls="--", color="grey", lw=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.legend(loc="lower right")
    fig.savefig(path, format="svg")
    plt.close(fig)


def _box_svg(box_rows: list, path: Path) -> None:
    arms = sorted({r["arm"] for r in box_rows})
    fig, ax = plt.subplots(figsize=(1.6 * len(SUMMARY_KEYS) * len(arms) + 1, 4))
    data, labels = [], []
    for key in SUMMARY_KEYS:
        for arm in arms:
            data.append([r["value"] for r in box_rows if r["metric"] == key and r["arm"] == arm])
            labels.append(f"{key}\n{arm}" if arm else key)
    ax.boxplot(data)
    ax.set_xticks(range(1, len(labels) + 1))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylim(-0.05, 1.05)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def emit_report(run_dir) -> dict:
    """Write summary.txt, boxplot.csv and SVG figures next to a run's outputs.

    Works for cross-validation runs (metrics.json, per_fold.csv, roc.csv)
    and ablation runs (ablation.json). Missing inputs are named in the
    summary instead of raising.
    """
    run = Path(run_dir)
    if not run.is_dir():
        raise FileNotFoundError(f"{run}: not a run directory")
    lines = [f"run: {run.name}"]
    missing = []
    written = {}
    if (run / "FAILED").exists():
        failure = json.loads((run / "FAILED").read_text())
        lines.append(f"status: FAILED at stage {failure.get('stage')!r}: {failure.get('error')}")
    elif not (run / "COMPLETED").exists():
        lines.append("status: incomplete")
    else:
        lines.append("status: completed")

    box_rows = []
    if (run / "ablation.json").exists():
        abl = json.loads((run / "ablation.json").read_text())
        for arm, res in abl["arms"].items():
            box_rows += _boxplot_rows(res["per_fold"], arm)
            lines.append(f"[{arm}]")
            lines += [f"  {k:12s} {res['summary'][k]:.4f}" for k in SUMMARY_KEYS]
    else:
        if (run / "metrics.json").exists():
            summary = json.loads((run / "metrics.json").read_text())["summary"]
            lines.append("mean over folds:")
            lines += [f"  {k:12s} {summary[k]:.4f}" for k in SUMMARY_KEYS]
        else:
            missing.append("metrics.json")
        if (run / "per_fold.csv").exists():
            box_rows = _boxplot_rows(_read_csv(run / "per_fold.csv"))
        else:
            missing.append("per_fold.csv")

    if box_rows:
        write_rows(run / "boxplot.csv", box_rows, ["arm", "metric", "fold", "value"])
        _box_svg(box_rows, run / "boxplot.svg")
        written["boxplot"] = str(run / "boxplot.csv")

    if (run / "roc.csv").exists():
        roc = [{"class": int(r["class"]), "fpr": float(r["fpr"]), "tpr": float(r["tpr"])}
               for r in _read_csv(run / "roc.csv")]
        _roc_svg(roc, run / "roc.svg")
        written["roc_svg"] = str(run / "roc.svg")
    elif not (run / "ablation.json").exists():
        missing.append("roc.csv")

    if missing:
        lines.append("missing sections: " + ", ".join(missing))
    (run / "summary.txt").write_text("\n".join(lines) + "\n")
    written["summary"] = str(run / "summary.txt")
    return {"written": written, "missing": missing}
