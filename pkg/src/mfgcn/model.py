"""Multi-frequency graph convolutional fusion model.

Each modality is encoded to a 64-wide embedding; the embeddings become the
node features of a small complete graph, pass through ``n_layers``
low/high-pass filter-bank blocks, get averaged over nodes, and are
concatenated with the raw embeddings before a dense softmax head.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .spectral import ModalityGraph, complete_graph

EMBED_DIM = 64
MODALITIES = ("audio", "video", "gaze")


@dataclass
class EncoderConfig:
    max_len: int = 64
    conv_channels: int = 16
    kernel_width: int = 3
    pool: int = 2
    hidden: int = 64


@dataclass
class MffbmConfig:
    phi: float = 0.5
    phi_i: Optional[list] = None
    a: float = 0.5
    k: int = 2
    n_layers: int = 2
    hidden: list = field(default_factory=lambda: [EMBED_DIM, EMBED_DIM])
    head_hidden: list = field(default_factory=lambda: [64, 32])
    n_classes: int = 3
    modalities: tuple = MODALITIES
    mask: Optional[list] = None
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.encoder, Mapping):
            self.encoder = EncoderConfig(**self.encoder)
        self.modalities = tuple(self.modalities)
        if self.phi_i is None:
            self.phi_i = [1.0 / self.k] * self.k
        self.phi_i = [float(x) for x in self.phi_i]
        if self.n_layers and len(self.hidden) != self.n_layers:
            self.hidden = [EMBED_DIM] * self.n_layers
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.phi <= 1.0:
            raise ValueError(f"phi must lie in [0, 1], got {self.phi}")
        if not 0.0 <= self.a <= 1.0:
            raise ValueError(f"a must lie in [0, 1], got {self.a}")
        if self.k < 1 or len(self.phi_i) != self.k:
            raise ValueError(f"need k >= 1 filter weights, got k={self.k}, phi_i={self.phi_i}")
        if any(x < 0 for x in self.phi_i) or abs(sum(self.phi_i) - 1.0) > 1e-12:
            raise ValueError(f"phi_i must be nonnegative and sum to 1, got {self.phi_i}")
        if self.n_layers < 0:
            raise ValueError("n_layers must be >= 0")
        if self.n_layers and self.hidden[-1] != EMBED_DIM:
            raise ValueError(f"last trunk width must be {EMBED_DIM}")
        if self.n_classes not in (2, 3):
            raise ValueError("n_classes must be 2 or 3")
        if not self.modalities or any(m not in MODALITIES for m in self.modalities):
            raise ValueError(f"modalities must be a nonempty subset of {MODALITIES}")

    @property
    def uses_graph(self) -> bool:
        return self.n_layers > 0 and len(self.modalities) > 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["modalities"] = list(self.modalities)
        return d


def glorot(rng: np.random.Generator, shape: tuple, fan_in: int, fan_out: int) -> np.ndarray:
    s = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


# --- layers ----------------------------------------------------------------

def lowpass_layer(h: Tensor, op: np.ndarray, thetas: Sequence[Tensor], weights: Sequence[float], activation=ad.relu) -> Tensor:
    """``sum_i w_i * act(S h Theta_i)`` with ``S`` the masked normalized adjacency.

    ``h`` is either a node matrix (N x d) or a batch of them (b x N x d).
    """
    if len(thetas) != len(weights) or not thetas:
        raise ShapeError(f"need one weight per filter, got {len(thetas)} filters and {len(weights)} weights")
    hb = _batched(h, op)
    agg = ad.propagate(op, hb)
    out = None
    for theta, w in zip(thetas, weights):
        branch = ad.scale(activation(ad.linear(agg, theta)), w)
        out = branch if out is None else ad.add(out, branch)
    return _unbatched(out, h)


def highpass_layer(h: Tensor, op: np.ndarray, theta: Tensor, a: float) -> Tensor:
    """``a * S h Theta - (1 - a) * h Theta``; no activation."""
    hb = _batched(h, op)
    proj = ad.linear(hb, theta)
    out = ad.sub(ad.scale(ad.propagate(op, proj), a), ad.scale(proj, 1.0 - a))
    return _unbatched(out, h)


def mffbm_block(h: Tensor, op: np.ndarray, low_thetas: Sequence[Tensor], high_theta: Tensor,
                cfg: MffbmConfig, activation=ad.relu) -> Tensor:
    low = lowpass_layer(h, op, low_thetas, cfg.phi_i, activation)
    high = highpass_layer(h, op, high_theta, cfg.a)
    return ad.add(ad.scale(low, cfg.phi), ad.scale(high, 1.0 - cfg.phi))


def global_average_pool(h: Tensor) -> Tensor:
    """Mean over nodes: (N x d) -> (d,), or (b x N x d) -> (b x d)."""
    if h.data.ndim not in (2, 3) or h.shape[-2] < 1:
        raise ShapeError(f"global_average_pool expects (N x d) or (b x N x d), got {h.shape}")
    return ad.mean(h, axis=h.data.ndim - 2)


def fuse(h_graph: Optional[Tensor], embeddings: Sequence[Tensor]) -> Tensor:
    """Concatenate graph features (if any) and per-modality embeddings, in that order."""
    parts = ([h_graph] if h_graph is not None else []) + list(embeddings)
    return ad.concat_channelwise(parts)


def _batched(h: Tensor, op: np.ndarray) -> Tensor:
    if op.ndim != 2 or op.shape[0] != op.shape[1]:
        raise ShapeError(f"graph operator must be square, got {op.shape}")
    if h.data.ndim == 2:
        if h.shape[0] != op.shape[0]:
            raise ShapeError(f"{h.shape[0]} nodes of features vs operator {op.shape}")
        return ad.reshape(h, (1,) + h.shape)
    if h.data.ndim != 3 or h.shape[1] != op.shape[0]:
        raise ShapeError(f"node features {h.shape} do not match operator {op.shape}")
    return h


def _unbatched(out: Tensor, like: Tensor) -> Tensor:
    return ad.reshape(out, out.shape[1:]) if like.data.ndim == 2 else out


# --- model -----------------------------------------------------------------

def pad_sequences(seqs: Sequence[np.ndarray], max_len: int, width: int, ids: Optional[Sequence[str]] = None) -> np.ndarray:
    """Zero-pad or truncate each (time x width) sequence to ``max_len`` frames."""
    out = np.zeros((len(seqs), max_len, width))
    for i, s in enumerate(seqs):
        s = np.asarray(s, dtype=np.float64)
        who = ids[i] if ids is not None else i
        if s.ndim != 2 or s.shape[0] == 0:
            raise ValueError(f"subject {who}: empty or malformed feature sequence {s.shape}")
        if s.shape[1] != width:
            raise ValueError(f"subject {who}: feature width {s.shape[1]} != expected {width}")
        t = min(max_len, s.shape[0])
        out[i, :t] = s[:t]
    return out


class MffbmModel:
    """Parameters plus forward pass; gradients come from an enclosing :class:`~mfgcn.autodiff.Tape`."""

    def __init__(self, cfg: MffbmConfig, feature_dims: Mapping[str, int], graph: Optional[ModalityGraph] = None):
        self.cfg = cfg
        self.feature_dims = {m: int(feature_dims[m]) for m in cfg.modalities}
        n = len(cfg.modalities)
        if graph is None:
            mask = None if cfg.mask is None else np.asarray(cfg.mask, dtype=float)
            graph = ModalityGraph(complete_graph(n).adjacency, mask)
        if graph.n_nodes != n:
            raise ValueError(f"graph has {graph.n_nodes} nodes for {n} modalities")
        self.graph = graph
        self.params: dict = {}
        self._init(np.random.default_rng(cfg.seed))

    def _add(self, name: str, arr: np.ndarray) -> None:
        self.params[name] = Tensor(arr, requires_grad=True, name=name)

    def _init(self, rng: np.random.Generator) -> None:
        e = self.cfg.encoder
        out_len = self._encoder_steps()
        if out_len < 1:
            raise ValueError(f"encoder max_len {e.max_len} too short for kernel {e.kernel_width} and pool {e.pool}")
        for m in self.cfg.modalities:
            f, c, w = self.feature_dims[m], e.conv_channels, e.kernel_width
            self._add(f"{m}.conv1.w", glorot(rng, (w, f, c), w * f, c))
            self._add(f"{m}.conv1.b", np.zeros(c))
            self._add(f"{m}.conv2.w", glorot(rng, (w, c, c), w * c, c))
            self._add(f"{m}.conv2.b", np.zeros(c))
            self._add(f"{m}.dense1.w", glorot(rng, (c, e.hidden), c, e.hidden))
            self._add(f"{m}.dense1.b", np.zeros(e.hidden))
            self._add(f"{m}.dense2.w", glorot(rng, (e.hidden, EMBED_DIM), e.hidden, EMBED_DIM))
            self._add(f"{m}.dense2.b", np.zeros(EMBED_DIM))
        if self.cfg.uses_graph:
            d_in = EMBED_DIM
            for layer, d_out in enumerate(self.cfg.hidden):
                for i in range(self.cfg.k):
                    self._add(f"trunk{layer}.low{i}", glorot(rng, (d_in, d_out), d_in, d_out))
                self._add(f"trunk{layer}.high", glorot(rng, (d_in, d_out), d_in, d_out))
                d_in = d_out
        width = self.fused_width
        for j, d_out in enumerate(list(self.cfg.head_hidden) + [self.cfg.n_classes]):
            self._add(f"head{j}.w", glorot(rng, (width, d_out), width, d_out))
            self._add(f"head{j}.b", np.zeros(d_out))
            width = d_out

    def _encoder_steps(self) -> int:
        e = self.cfg.encoder
        t = e.max_len - e.kernel_width + 1
        t //= e.pool
        return t - e.kernel_width + 1

    @property
    def fused_width(self) -> int:
        return EMBED_DIM * (len(self.cfg.modalities) + (1 if self.cfg.uses_graph else 0))

    def parameters(self) -> list:
        return list(self.params.values())

    def encode(self, modality: str, x: np.ndarray) -> Tensor:
        """(n x max_len x f) padded batch -> (n x 64) embedding."""
        p = self.params
        h = ad.relu(ad.conv1d(Tensor(x), p[f"{modality}.conv1.w"], p[f"{modality}.conv1.b"]))
        h = ad.maxpool1d(h, self.cfg.encoder.pool)
        h = ad.relu(ad.conv1d(h, p[f"{modality}.conv2.w"], p[f"{modality}.conv2.b"]))
        h = ad.mean(h, axis=1)
        h = ad.relu(ad.add_bias(ad.linear(h, p[f"{modality}.dense1.w"]), p[f"{modality}.dense1.b"]))
        return ad.add_bias(ad.linear(h, p[f"{modality}.dense2.w"]), p[f"{modality}.dense2.b"])

    def trunk(self, nodes: Tensor, activation=ad.relu) -> Tensor:
        h = nodes
        op = self.graph.masked
        for layer in range(self.cfg.n_layers):
            lows = [self.params[f"trunk{layer}.low{i}"] for i in range(self.cfg.k)]
            h = mffbm_block(h, op, lows, self.params[f"trunk{layer}.high"], self.cfg, activation)
        return h

    def classify(self, z: Tensor) -> Tensor:
        n_dense = len(self.cfg.head_hidden) + 1
        h = z
        for j in range(n_dense):
            h = ad.add_bias(ad.linear(h, self.params[f"head{j}.w"]), self.params[f"head{j}.b"])
            if j < n_dense - 1:
                h = ad.relu(h)
        return ad.softmax(h)

    def prepare(self, features: Mapping[str, Sequence[np.ndarray]], ids=None) -> dict:
        """Pad raw per-subject sequences into encoder batches."""
        return {m: pad_sequences(features[m], self.cfg.encoder.max_len, self.feature_dims[m], ids)
                for m in self.cfg.modalities}

    def forward(self, batch: Mapping[str, np.ndarray]) -> tuple:
        """Padded batches per modality -> (probabilities, Z, intermediates)."""
        sizes = {m: batch[m].shape[0] for m in self.cfg.modalities}
        if len(set(sizes.values())) != 1:
            raise ShapeError(f"modalities disagree on subject count: {sizes}")
        embeddings = [self.encode(m, batch[m]) for m in self.cfg.modalities]
        inter = {"embeddings": dict(zip(self.cfg.modalities, embeddings))}
        h_graph = None
        if self.cfg.uses_graph:
            n = embeddings[0].shape[0]
            nodes = ad.reshape(ad.concat_channelwise(embeddings), (n, len(embeddings), EMBED_DIM))
            out = self.trunk(nodes)
            h_graph = global_average_pool(out)
            inter["nodes"], inter["trunk"], inter["pooled"] = nodes, out, h_graph
        z = fuse(h_graph, embeddings)
        return self.classify(z), z, inter

    def predict_proba(self, batch: Mapping[str, np.ndarray]) -> np.ndarray:
        return self.forward(batch)[0].numpy()

    # --- persistence -------------------------------------------------------

    def state(self) -> dict:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state(self, state: Mapping[str, np.ndarray]) -> None:
        for k, v in state.items():
            if k not in self.params:
                raise KeyError(f"unexpected parameter {k!r}")
            if self.params[k].shape != np.shape(v):
                raise ShapeError(f"parameter {k}: shape {np.shape(v)} != expected {self.params[k].shape}")
        missing = set(self.params) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        self.params = {k: Tensor(state[k], requires_grad=True, name=k) for k in self.params}

    def save(self, path) -> None:
        doc = {
            "format": "mfgcn-checkpoint/1",
            "config": self.cfg.to_dict(),
            "feature_dims": self.feature_dims,
            "params": {k: {"shape": list(v.shape), "data": v.data.ravel().tolist()} for k, v in self.params.items()},
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path) -> "MffbmModel":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != "mfgcn-checkpoint/1":
            raise ValueError(f"{path}: not an mfgcn checkpoint")
        model = cls(MffbmConfig(**doc["config"]), doc["feature_dims"])
        state = {}
        for k, v in doc["params"].items():
            data = np.asarray(v["data"], dtype=np.float64)
            if data.size != int(np.prod(v["shape"])):
                raise ShapeError(f"parameter {k}: {data.size} values for shape {v['shape']}")
            state[k] = data.reshape(v["shape"])
        model.load_state(state)
        return model
