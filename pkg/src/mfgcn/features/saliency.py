"""Fixation-vs-saliency comparison metrics.

Distribution metrics (CC, SIM, KLDiv) compare the saliency map against a
fixation density, i.e. the fixation map blurred with a Gaussian. Location
metrics (NSS, the AUC family, InfoGain) use the binary fixations directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

EPS = 1e-12
METRIC_NAMES = ("auc_borji", "auc_judd", "cc", "kldiv", "nss", "sim", "auc_shuffled", "info_gain")
DEFAULT_SIGMA = 1.0
DEFAULT_SPLITS = 100


@dataclass(frozen=True)
class SaliencyPair:
    fixation_map: np.ndarray
    saliency_map: np.ndarray

    def __post_init__(self):
        fix = np.asarray(self.fixation_map, dtype=np.float64)
        sal = np.asarray(self.saliency_map, dtype=np.float64)
        if fix.shape != sal.shape or fix.ndim != 2:
            raise ValueError(f"fixation {fix.shape} and saliency {sal.shape} maps must be equal 2-D shapes")
        if not np.all((fix == 0) | (fix == 1)):
            raise ValueError("fixation map must be binary")
        if fix.sum() < 1:
            raise ValueError("fixation map has no fixated pixel")
        if np.any(sal < 0):
            raise ValueError("saliency map must be nonnegative")
        if not np.any(sal > 0):
            raise ValueError("saliency map is identically zero")
        object.__setattr__(self, "fixation_map", fix)
        object.__setattr__(self, "saliency_map", sal)


def fixation_density(fix: np.ndarray, sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    return gaussian_filter(np.asarray(fix, dtype=np.float64), sigma, mode="constant")


def _normalize_sum(m: np.ndarray) -> np.ndarray:
    return m / m.sum()


def roc_area(pos: np.ndarray, neg: np.ndarray) -> float:
    """Exact area under the ROC curve of scores ``pos`` against ``neg``.

    Sweeps every distinct score as a threshold and integrates with the
    trapezoid rule, so tied positive/negative pairs count one half.
    """
    pos = np.asarray(pos, dtype=np.float64).ravel()
    neg = np.asarray(neg, dtype=np.float64).ravel()
    thr = np.unique(np.concatenate([pos, neg]))[::-1]
    tp = np.searchsorted(np.sort(-pos), -thr, side="right") / len(pos)
    fp = np.searchsorted(np.sort(-neg), -thr, side="right") / len(neg)
    tp = np.concatenate([[0.0], tp])
    fp = np.concatenate([[0.0], fp])
    return float(np.sum(np.diff(fp) * (tp[1:] + tp[:-1]) / 2.0))


def auc_judd(sal: np.ndarray, fix: np.ndarray) -> float:
    """ROC area with thresholds at the saliency values of fixated pixels.

    Between two such thresholds only non-fixated pixels enter, so the curve
    is integrated as the exact staircase rather than a straight chord.
    """
    s = sal.ravel()
    f = fix.ravel() > 0
    n_fix = int(f.sum())
    n_neg = s.size - n_fix
    if n_neg == 0:
        return float("nan")
    thr = np.sort(s[f])[::-1]
    thr = np.unique(thr)[::-1]
    tp, fp = [0.0], [0.0]
    for t in thr:
        above = s >= t
        hits = int(np.count_nonzero(above & f))
        # horizontal run at the previous hit rate, then the vertical jump
        fp_before = np.count_nonzero((s > t) & ~f) / n_neg
        tp.append(tp[-1])
        fp.append(fp_before)
        tp.append(hits / n_fix)
        fp.append(np.count_nonzero(above & ~f) / n_neg)
    tp.append(1.0)
    fp.append(1.0)
    tp, fp = np.asarray(tp), np.asarray(fp)
    return float(np.sum(np.diff(fp) * (tp[1:] + tp[:-1]) / 2.0))


def auc_borji(sal: np.ndarray, fix: np.ndarray, n_splits: int = DEFAULT_SPLITS, seed: int = 0) -> float:
    """Mean ROC area with negatives drawn uniformly from all pixels."""
    rng = np.random.default_rng(seed)
    s = sal.ravel()
    pos = s[fix.ravel() > 0]
    return float(np.mean([roc_area(pos, s[rng.integers(0, s.size, size=len(pos))]) for _ in range(n_splits)]))


def auc_shuffled(sal: np.ndarray, fix: np.ndarray, other_fixations: Sequence[np.ndarray],
                 n_splits: int = DEFAULT_SPLITS, seed: int = 0) -> float:
    """Mean ROC area with negatives drawn from fixation locations of other images."""
    rng = np.random.default_rng(seed)
    s = sal.ravel()
    f = fix.ravel() > 0
    other = np.zeros(s.size, dtype=bool)
    for o in other_fixations:
        o = np.asarray(o)
        if o.shape != sal.shape:
            raise ValueError(f"other fixation map {o.shape} does not match {sal.shape}")
        other |= o.ravel() > 0
    other &= ~f
    pool = s[other]
    if pool.size == 0:
        return float("nan")
    pos = s[f]
    return float(np.mean([roc_area(pos, pool[rng.integers(0, pool.size, size=len(pos))]) for _ in range(n_splits)]))


def cc(sal: np.ndarray, density: np.ndarray) -> float:
    """Pearson correlation; 0 when either map is constant."""
    a = sal - sal.mean()
    b = density - density.mean()
    den = np.sqrt(np.sum(a * a) * np.sum(b * b))
    return float(np.sum(a * b) / den) if den > 0 else 0.0


def nss(sal: np.ndarray, fix: np.ndarray) -> float:
    """Mean z-scored saliency at fixations; 0 for a constant map."""
    sd = sal.std()
    if sd == 0:
        return 0.0
    z = (sal - sal.mean()) / sd
    return float(z[fix > 0].mean())


def sim(sal: np.ndarray, density: np.ndarray) -> float:
    return float(np.minimum(_normalize_sum(sal), _normalize_sum(density)).sum())


def kldiv(sal: np.ndarray, density: np.ndarray) -> float:
    p = _normalize_sum(density)
    q = _normalize_sum(sal)
    live = p > 0
    return float(np.sum(p[live] * np.log(p[live] / (q[live] + EPS))))


def info_gain(sal: np.ndarray, fix: np.ndarray, baseline: np.ndarray) -> float:
    if baseline.shape != sal.shape:
        raise ValueError(f"baseline {baseline.shape} does not match {sal.shape}")
    p = _normalize_sum(sal)
    b = _normalize_sum(np.asarray(baseline, dtype=np.float64))
    f = fix > 0
    return float(np.mean(np.log2(p[f] + EPS) - np.log2(b[f] + EPS)))


def saliency_metrics(pair: SaliencyPair, other_fixations: Optional[Sequence[np.ndarray]] = None,
                     baseline: Optional[np.ndarray] = None, sigma: float = DEFAULT_SIGMA,
                     n_splits: int = DEFAULT_SPLITS, seed: int = 0) -> dict:
    """All eight metrics in canonical order; unavailable ones are ``None``.

    The result carries a ``"missing"`` list naming metrics that could not be
    computed for lack of ``other_fixations`` or ``baseline``.
    """
    sal, fix = pair.saliency_map, pair.fixation_map
    dens = fixation_density(fix, sigma)
    out = {
        "auc_borji": auc_borji(sal, fix, n_splits, seed),
        "auc_judd": auc_judd(sal, fix),
        "cc": cc(sal, dens),
        "kldiv": kldiv(sal, dens),
        "nss": nss(sal, fix),
        "sim": sim(sal, dens),
        "auc_shuffled": None,
        "info_gain": None,
    }
    if other_fixations:
        out["auc_shuffled"] = auc_shuffled(sal, fix, other_fixations, n_splits, seed)
    if baseline is not None:
        out["info_gain"] = info_gain(sal, fix, np.asarray(baseline, dtype=np.float64))
    out["missing"] = [k for k in METRIC_NAMES if out[k] is None]
    return out


def metric_vector(metrics: dict) -> np.ndarray:
    """Canonically ordered 8-vector; missing metrics become 0."""
    return np.array([0.0 if metrics[k] is None else metrics[k] for k in METRIC_NAMES])
