"""Optimization and cross-validation protocol."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .model import MffbmModel

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    max_epochs: int = 500
    early_stop_patience: int = 50
    batch_size: int = 16
    seed: int = 0
    k_folds: int = 10
    task: str = "three_class"
    val_fraction: float = 0.1
    augment_times: int = 0
    augment_blocks: int = 12

    def __post_init__(self):
        if self.task not in ("binary", "three_class"):
            raise ValueError(f"task must be binary or three_class, got {self.task!r}")
        for name in ("learning_rate", "max_epochs", "batch_size", "k_folds"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.early_stop_patience <= self.max_epochs:
            raise ValueError("early_stop_patience must lie in [0, max_epochs]")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")

    @property
    def n_classes(self) -> int:
        return 2 if self.task == "binary" else 3

    def to_dict(self) -> dict:
        return asdict(self)


# --- labels and splits -----------------------------------------------------

def phq9_to_class(score: int, task: str = "three_class") -> int:
    """Zero-based class index: three_class 0-4 -> 0, 5-14 -> 1, 15-27 -> 2; binary 0-4 -> 0, else 1."""
    if isinstance(score, bool) or int(score) != score or not 0 <= score <= 27:
        raise ValueError(f"PHQ-9 score must be an integer in [0, 27], got {score!r}")
    if task == "three_class":
        return 0 if score <= 4 else 1 if score <= 14 else 2
    if task == "binary":
        return 0 if score <= 4 else 1
    raise ValueError(f"unknown task {task!r}")


@dataclass(frozen=True)
class FoldSplit:
    index: int
    train: tuple
    test: tuple


def kfold_split(ids: Sequence, k: int, seed: int, labels: Optional[Sequence[int]] = None) -> list:
    """Seeded, label-stratified, subject-wise k-fold partition.

    Subjects are shuffled within each class, the classes are laid end to end
    and dealt round-robin over the folds, so fold sizes differ by at most one
    and every class is spread as evenly as its count allows.
    """
    ids = list(ids)
    if len(set(ids)) != len(ids):
        raise ValueError("subject ids must be unique")
    if k < 2 or k > len(ids):
        raise ValueError(f"cannot make {k} folds from {len(ids)} subjects")
    rng = np.random.default_rng(seed)
    if labels is None:
        order = [ids[i] for i in rng.permutation(len(ids))]
    else:
        labels = list(labels)
        order = []
        for c in sorted(set(labels)):
            members = [s for s, y in zip(ids, labels) if y == c]
            order += [members[i] for i in rng.permutation(len(members))]
    tests = [order[f::k] for f in range(k)]
    out = []
    for f, t in enumerate(tests):
        held = set(t)
        out.append(FoldSplit(f, tuple(s for s in ids if s not in held), tuple(t)))
    return out


def shuffle_permutations(n_blocks: int, times: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    return [rng.permutation(n_blocks) for _ in range(times)]


def augment_shuffle_responses(blocks: Sequence, times: int, seed: int) -> list:
    """Original block order plus ``times`` seeded reorderings of it."""
    blocks = list(blocks)
    if len(blocks) < 2:
        logger.warning("augment_shuffle_responses: %d block(s), nothing to shuffle; returning the original", len(blocks))
        return [blocks]
    return [blocks] + [[blocks[i] for i in perm] for perm in shuffle_permutations(len(blocks), times, seed)]


def augment_subject(features: dict, n_blocks: int, times: int, seed: int) -> list:
    """Shuffle response blocks of every modality with one shared permutation per copy."""
    split = {m: np.array_split(np.asarray(x), min(n_blocks, len(x))) for m, x in features.items()}
    n = min(len(v) for v in split.values())
    if n < 2:
        return [features]
    out = [features]
    for perm in shuffle_permutations(n, times, seed):
        out.append({m: np.concatenate([v[i] for i in perm] + v[n:], axis=0) for m, v in split.items()})
    return out


# --- optimization ----------------------------------------------------------

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> dict:
    """One bias-corrected Adam update; returns new parameter arrays, mutates ``state``."""
    state.t += 1
    out = {}
    for name, p in params.items():
        g = grads[name]
        if np.shape(g) != np.shape(p):
            raise ValueError(f"{name}: gradient shape {np.shape(g)} != parameter shape {np.shape(p)}")
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        if m.shape != np.shape(p):
            raise ValueError(f"{name}: optimizer state shape {m.shape} != parameter shape {np.shape(p)}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1.0 - beta1 ** state.t)
        v_hat = v / (1.0 - beta2 ** state.t)
        out[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out


def cross_entropy_loss(probs: Tensor, labels) -> Tensor:
    labels = np.asarray(labels, dtype=np.int64)
    n, c = probs.shape
    if labels.shape != (n,) or labels.min(initial=0) < 0 or labels.max(initial=0) >= c:
        raise ValueError(f"labels must be {n} integers in [0, {c})")
    onehot = np.zeros((n, c))
    onehot[np.arange(n), labels] = 1.0
    picked = ad.sum(ad.mul(probs, Tensor(onehot)), axis=1)
    return ad.scale(ad.mean(ad.log(picked, PROB_FLOOR)), -1.0)


# --- training --------------------------------------------------------------

def _loss_value(model: MffbmModel, batch: dict, y: np.ndarray) -> float:
    probs = model.forward(batch)[0]
    return cross_entropy_loss(probs, y).item()


def _take(batch: dict, idx) -> dict:
    return {m: x[idx] for m, x in batch.items()}


def train(model: MffbmModel, features: dict, labels, cfg: TrainConfig, ids: Optional[Sequence] = None) -> tuple:
    """Minibatch Adam with early stopping on a held-out slice of the training subjects.

    ``features`` maps modality -> list of per-subject (time x f) arrays.
    Returns ``(model, history)`` with the best-validation parameters loaded.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if n == 0:
        raise ValueError("empty training set")
    ids = list(ids) if ids is not None else list(range(n))
    rng = np.random.default_rng(cfg.seed)
    n_val = int(round(cfg.val_fraction * n)) if n >= 10 else (1 if cfg.val_fraction > 0 and n >= 4 else 0)
    perm = rng.permutation(n)
    val_idx, fit_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])

    fit_feats = {m: [features[m][i] for i in fit_idx] for m in model.cfg.modalities}
    fit_y = labels[fit_idx]
    fit_ids = [ids[i] for i in fit_idx]
    if cfg.augment_times > 0:
        fit_feats, fit_y, fit_ids = _augment(fit_feats, fit_y, fit_ids, cfg)
    fit = model.prepare(fit_feats, fit_ids)
    val = model.prepare({m: [features[m][i] for i in val_idx] for m in model.cfg.modalities},
                        [ids[i] for i in val_idx]) if n_val else None

    params = model.parameters()
    state = AdamState()
    history = []
    best, best_state, bad = np.inf, model.state(), 0
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(fit_y))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            with Tape() as tape:
                probs = model.forward(_take(fit, idx))[0]
                loss = cross_entropy_loss(probs, fit_y[idx])
            if not np.isfinite(loss.item()):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            g = tape.backward(loss, params)
            new = adam_step(model.state(), {p.name: g[p.id] for p in params}, state, cfg.learning_rate)
            model.load_state(new)
            params = model.parameters()
            losses.append(loss.item() * len(idx))
        train_loss = float(np.sum(losses) / len(order))
        monitor = _loss_value(model, val, labels[val_idx]) if val is not None else train_loss
        if not np.isfinite(monitor):
            raise TrainingDiverged(f"non-finite validation loss at epoch {epoch}")
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": monitor if val is not None else None})
        if monitor < best:
            best, best_state, bad = monitor, model.state(), 0
        else:
            bad += 1
            if bad > cfg.early_stop_patience:
                break
    model.load_state(best_state)
    return model, history


def _augment(feats: dict, y: np.ndarray, ids: list, cfg: TrainConfig) -> tuple:
    mods = list(feats)
    out = {m: [] for m in mods}
    out_y, out_ids = [], []
    for i, sid in enumerate(ids):
        copies = augment_subject({m: feats[m][i] for m in mods}, cfg.augment_blocks, cfg.augment_times, cfg.seed + i)
        for j, c in enumerate(copies):
            for m in mods:
                out[m].append(c[m])
            out_y.append(y[i])
            out_ids.append(sid if j == 0 else f"{sid}#aug{j}")
    return out, np.asarray(out_y), out_ids
