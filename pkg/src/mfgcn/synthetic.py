"""Seeded synthetic cohorts for tests and demos.

``separable``: three classes, each shifting every modality's feature means
in a class-specific direction; any one modality suffices.

``xor``: binary; each subject draws an independent sign per modality and the
label is whether the audio and video signs disagree. No single modality
carries information about the label.
"""

from __future__ import annotations

import numpy as np

from .data import Cohort
from .features.emotion import EMOTIONS
from .features.saliency import METRIC_NAMES

DIMS = {"audio": 16, "video": len(EMOTIONS), "gaze": len(METRIC_NAMES)}
_PHQ_RANGES = {"three_class": ((0, 4), (5, 14), (15, 27)), "binary": ((0, 4), (5, 27))}


def _names() -> dict:
    return {"audio": [f"a{i}" for i in range(DIMS["audio"])], "video": list(EMOTIONS), "gaze": list(METRIC_NAMES)}


def _phq(rng, label: int, task: str) -> int:
    lo, hi = _PHQ_RANGES[task][label]
    return int(rng.integers(lo, hi + 1))


def _sequence(rng, modality: str, length: int, offset: np.ndarray, noise: float) -> np.ndarray:
    x = offset[None, :] + noise * rng.standard_normal((length, len(offset)))
    if modality == "video":
        # emotion scores live in [0, 1]
        x = np.clip(0.5 + 0.25 * x, 0.0, 1.0)
    return x


def make_separable(n_subjects: int = 30, seed: int = 0, length: int = 24, noise: float = 0.5) -> Cohort:
    rng = np.random.default_rng(seed)
    labels = np.arange(n_subjects) % 3
    rng.shuffle(labels)
    centers = {m: rng.standard_normal((3, d)) for m, d in DIMS.items()}
    feats = {m: [] for m in DIMS}
    ids, phq = [], []
    for i, y in enumerate(labels):
        ids.append(f"sep{i:03d}")
        phq.append(_phq(rng, int(y), "three_class"))
        for m in DIMS:
            feats[m].append(_sequence(rng, m, length, centers[m][y], noise))
    return Cohort(ids, phq, feats, _names(), f"separable-{seed}")


def make_xor(n_subjects: int = 64, seed: int = 0, length: int = 24, noise: float = 0.5, strength: float = 1.0) -> Cohort:
    rng = np.random.default_rng(seed)
    # balanced sign patterns
    signs = np.array([(sa, sv) for sa in (-1, 1) for sv in (-1, 1)] * (n_subjects // 4 + 1))[:n_subjects]
    rng.shuffle(signs)
    gaze_sign = rng.choice([-1, 1], size=n_subjects)
    direction = {m: rng.standard_normal(d) for m, d in DIMS.items()}
    direction = {m: v / np.linalg.norm(v) * np.sqrt(len(v)) for m, v in direction.items()}
    feats = {m: [] for m in DIMS}
    ids, phq = [], []
    for i, (sa, sv) in enumerate(signs):
        y = int(sa != sv)
        ids.append(f"xor{i:03d}")
        phq.append(_phq(rng, y, "binary"))
        for m, s in (("audio", sa), ("video", sv), ("gaze", gaze_sign[i])):
            feats[m].append(_sequence(rng, m, length, strength * s * direction[m], noise))
    return Cohort(ids, phq, feats, _names(), f"xor-{seed}")


COHORTS = {"separable": make_separable, "xor": make_xor}
