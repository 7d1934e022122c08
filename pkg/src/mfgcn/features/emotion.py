"""Validation of precomputed per-frame facial-emotion scores."""

from __future__ import annotations

from typing import Sequence

import numpy as np

EMOTIONS = ("angry", "disgust", "fear", "happy", "sad", "surprise", "neutral")


class EmotionRowError(ValueError):
    def __init__(self, row: int, reason: str):
        super().__init__(f"emotion row {row}: {reason}")
        self.row = row


def load_emotion_features(rows: Sequence[Sequence[float]]) -> np.ndarray:
    """Stack per-frame 7-vectors (canonical order) into a time x 7 matrix."""
    out = []
    for i, row in enumerate(rows):
        vals = list(row)
        if len(vals) != len(EMOTIONS):
            raise EmotionRowError(i, f"expected {len(EMOTIONS)} scores, got {len(vals)}")
        try:
            vec = np.asarray(vals, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise EmotionRowError(i, f"non-numeric score ({exc})") from None
        bad = ~np.isfinite(vec) | (vec < 0.0) | (vec > 1.0)
        if bad.any():
            j = int(np.argmax(bad))
            raise EmotionRowError(i, f"{EMOTIONS[j]} = {vec[j]} outside [0, 1]")
        out.append(vec)
    if not out:
        return np.zeros((0, len(EMOTIONS)))
    return np.vstack(out)
