"""Graph construction, normalization and frequency-response analysis.

Frequencies are eigenvalues of the self-loop Laplacian ``L = I - A_norm``
unless a function says otherwise. A kernel that is a polynomial ``q`` in
``A_norm`` has response ``q(1 - lam)`` at each eigenvalue ``lam``.

:func:`summed_closed_form` is a reference closed form for the combined
two-layer filter. It does not agree with the kernel expansions in
:func:`mffbm_kernels`, and the tests assert the gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

SYM_TOL = 1e-10
OFFDIAG_TOL = 1e-12


class NotSymmetricError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


def _check_symmetric(m: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetricError(f"{what} must be square, got shape {m.shape}")
    if m.size and np.max(np.abs(m - m.T)) > SYM_TOL:
        raise NotSymmetricError(f"{what} is not symmetric (max |M - M^T| = {np.max(np.abs(m - m.T)):.3e})")
    return m


@dataclass(frozen=True, eq=False)
class ModalityGraph:
    """Undirected graph over modality nodes with an optional static mask."""

    adjacency: np.ndarray
    mask: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"adjacency must be a non-empty square matrix, got {a.shape}")
        if not np.array_equal(a, a.T):
            raise NotSymmetricError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency must have a zero diagonal")
        if not np.all((a == 0) | (a == 1)):
            raise ValueError("adjacency must be 0/1")
        m = np.ones_like(a) if self.mask is None else np.array(self.mask, dtype=np.float64)
        if m.shape != a.shape:
            raise ValueError(f"mask shape {m.shape} does not match adjacency {a.shape}")
        if np.any(m < 0):
            raise ValueError("mask entries must be nonnegative")
        if not np.allclose(m, m.T, atol=0):
            raise NotSymmetricError("mask must be symmetric for an undirected graph")
        a.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "adjacency", a)
        object.__setattr__(self, "mask", m)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @cached_property
    def normalized(self) -> np.ndarray:
        return normalize_adjacency(self)

    @cached_property
    def masked(self) -> np.ndarray:
        """``A_norm * M`` (elementwise), the propagation operator used by the model."""
        return self.normalized * self.mask

    @cached_property
    def laplacian(self) -> np.ndarray:
        return laplacian(self.normalized)

    @cached_property
    def spectrum(self) -> "SpectralDecomposition":
        return eigendecompose(self.laplacian)

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def regular_degree(self) -> Optional[int]:
        d = self.degrees()
        return int(d[0]) if np.all(d == d[0]) else None


def complete_graph(n: int) -> ModalityGraph:
    return ModalityGraph(np.ones((n, n)) - np.eye(n))


def cycle_graph(n: int) -> ModalityGraph:
    if n < 3:
        raise ValueError("a cycle needs at least 3 nodes")
    a = np.zeros((n, n))
    for i in range(n):
        a[i, (i + 1) % n] = a[(i + 1) % n, i] = 1
    return ModalityGraph(a)


def path_graph(n: int) -> ModalityGraph:
    a = np.zeros((n, n))
    for i in range(n - 1):
        a[i, i + 1] = a[i + 1, i] = 1
    return ModalityGraph(a)


def erdos_renyi_graph(n: int, p: float, seed: int) -> ModalityGraph:
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((n, n)) < p, k=1).astype(float)
    return ModalityGraph(upper + upper.T)


def normalize_adjacency(g: ModalityGraph) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2`` with D the degree matrix of ``A + I``."""
    a_hat = g.adjacency + np.eye(g.n_nodes)
    inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    out = inv_sqrt[:, None] * a_hat * inv_sqrt[None, :]
    # exact symmetry; the product above can differ in the last bit
    return 0.5 * (out + out.T)


def plain_normalized_laplacian(g: ModalityGraph) -> np.ndarray:
    """``I - D^-1/2 A D^-1/2`` without self-loops (isolated nodes get 1 on the diagonal).

    This is the Laplacian in whose spectrum the textbook GCN profile
    ``1 - p/(p+1) * lam`` is stated.
    """
    d = g.degrees()
    inv_sqrt = np.where(d > 0, 1.0 / np.sqrt(np.where(d > 0, d, 1.0)), 0.0)
    out = np.eye(g.n_nodes) - inv_sqrt[:, None] * g.adjacency * inv_sqrt[None, :]
    return 0.5 * (out + out.T)


def laplacian(a_norm: np.ndarray) -> np.ndarray:
    a_norm = _check_symmetric(a_norm, "normalized adjacency")
    return np.eye(a_norm.shape[0]) - a_norm


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T


def eigendecompose(s: np.ndarray, tol: float = OFFDIAG_TOL, max_sweeps: Optional[int] = None) -> SpectralDecomposition:
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Sweeps over every (p, q) pair in row order, annihilating each
    off-diagonal entry with a plane rotation, until every off-diagonal
    magnitude is below ``tol``. Eigenvalues come back ascending.
    """
    a = _check_symmetric(s, "matrix").copy()
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    limit = 100 * n * n if max_sweeps is None else max_sweeps
    sweeps = 0
    while True:
        off = np.abs(a - np.diag(np.diag(a)))
        if n < 2 or off.max() < tol:
            break
        if sweeps >= limit:
            raise ConvergenceError(f"Jacobi did not converge after {sweeps} sweeps (max off-diagonal {off.max():.3e})")
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - sn * aq
                a[:, q] = sn * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - sn * rq
                a[q, :] = sn * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                v[:, p] = c * vp - sn * v[:, q]
                v[:, q] = sn * vp + c * v[:, q]
    lam = np.diag(a).copy()
    order = np.argsort(lam, kind="stable")
    return SpectralDecomposition(lam[order], v[:, order], sweeps)


def frequency_response(c: np.ndarray, decomp: SpectralDecomposition) -> np.ndarray:
    """Per-eigenvalue gain of kernel ``c``: the diagonal of ``U^T C U``."""
    c = _check_symmetric(c, "kernel")
    u = decomp.eigenvectors
    return np.diag(u.T @ c @ u).copy()


def spectral_leakage(c: np.ndarray, decomp: SpectralDecomposition) -> float:
    """Largest off-diagonal magnitude of ``U^T C U``; ~0 when C shares the eigenbasis."""
    u = decomp.eigenvectors
    m = u.T @ np.asarray(c, dtype=np.float64) @ u
    return float(np.max(np.abs(m - np.diag(np.diag(m))))) if m.shape[0] > 1 else 0.0


def gcn_profile(p: int, lam):
    """Frequency profile ``1 - p/(p+1) * lam`` of a GCN layer on a p-regular graph."""
    if p < 1:
        raise ValueError("degree p must be >= 1")
    return 1.0 - (p / (p + 1.0)) * np.asarray(lam, dtype=np.float64)


def polynomial_kernel(a_norm: np.ndarray, coeffs) -> np.ndarray:
    """``sum_k coeffs[k] * A_norm^k``."""
    n = a_norm.shape[0]
    out = np.zeros((n, n))
    power = np.eye(n)
    for ck in coeffs:
        out += ck * power
        power = power @ a_norm
    return out


def polynomial_response(coeffs, lam) -> np.ndarray:
    x = 1.0 - np.asarray(lam, dtype=np.float64)
    return sum(ck * x ** k for k, ck in enumerate(coeffs))


def highpass_coeffs(a: float, convention: str = "equation") -> tuple:
    """Coefficients (in powers of A_norm) of the one-layer high-pass kernel.

    ``"equation"`` is ``a*A - (1-a)*I`` as the layer computes it;
    ``"prose"`` is its negation ``-a*A + (1-a)*I`` as described in words.
    """
    if convention == "equation":
        return (-(1.0 - a), a)
    if convention == "prose":
        return (1.0 - a, -a)
    raise ValueError(f"unknown high-pass convention {convention!r}")


def block_coeffs(phi: float, a: float) -> tuple:
    """Linearized one-layer kernel of a block with k = 1 and shared weights:
    ``phi*A + (1-phi)*(a*A - (1-a)*I)``."""
    return (-(1.0 - phi) * (1.0 - a), phi + (1.0 - phi) * a)


def _poly_mul(p, q) -> tuple:
    out = [0.0] * (len(p) + len(q) - 1)
    for i, x in enumerate(p):
        for j, y in enumerate(q):
            out[i + j] += x * y
    return tuple(out)


def trunk_coeffs(phi: float, a: float, n_layers: int) -> tuple:
    out = (1.0,)
    for _ in range(n_layers):
        out = _poly_mul(out, block_coeffs(phi, a))
    return out


class TwoLayerKernels(NamedTuple):
    low_two_layer: np.ndarray
    high_two_layer: np.ndarray
    combined: np.ndarray
    trunk: np.ndarray


def two_layer_coeffs(phi: float) -> dict:
    k1 = (0.0, -(1.0 - phi), 1.0)
    k2 = (1.0 - phi, -phi, 1.0)
    comb = tuple(phi * x + (1.0 - phi) * y for x, y in zip(k1, k2))
    return {"k1": k1, "k2": k2, "combined": comb}


def mffbm_kernels(a_norm: np.ndarray, phi: float, a: float) -> TwoLayerKernels:
    """Two-layer activation-free kernels.

    ``low_two_layer = A^2 - (1-phi) A`` and
    ``high_two_layer = A^2 - phi A + (1-phi) I`` are the two-layer
    expansions; ``combined = phi*low + (1-phi)*high``. ``trunk`` is the
    kernel the implemented two-block stack actually applies (k = 1, shared
    weights, no activation) for the given ``a``.
    """
    if not (0.0 <= phi <= 1.0 and 0.0 <= a <= 1.0):
        raise ValueError("phi and a must lie in [0, 1]")
    a_norm = _check_symmetric(a_norm, "normalized adjacency")
    c = two_layer_coeffs(phi)
    return TwoLayerKernels(
        polynomial_kernel(a_norm, c["k1"]),
        polynomial_kernel(a_norm, c["k2"]),
        polynomial_kernel(a_norm, c["combined"]),
        polynomial_kernel(a_norm, trunk_coeffs(phi, a, 2)),
    )


def summed_closed_form(phi: float, lam):
    """Reference closed form ``2 lam^2 - phi lam + (1 + phi)`` for the combined filter."""
    lam = np.asarray(lam, dtype=np.float64)
    return 2.0 * lam ** 2 - phi * lam + (1.0 + phi)


def make_graph(family: str, n: int, p: float = 0.4, seed: int = 7) -> ModalityGraph:
    if family == "complete":
        return complete_graph(n)
    if family == "cycle":
        return cycle_graph(n)
    if family == "path":
        return path_graph(n)
    if family in ("erdos_renyi", "er"):
        return erdos_renyi_graph(n, p, seed)
    raise ValueError(f"unknown graph family {family!r}; expected complete, cycle, path or erdos_renyi")


KERNELS = ("identity", "adjacency", "laplacian", "gcn_regular", "highpass", "highpass_prose",
           "k1", "k2", "combined", "trunk")


def analyze(g: ModalityGraph, kernels=KERNELS, phi: float = 0.5, a: float = 0.5) -> list:
    """Numeric vs analytic response rows for each kernel at every eigenvalue.

    ``gcn_regular`` evaluates ``A_norm`` in the eigenbasis of the self-loop-free
    normalized Laplacian and compares against :func:`gcn_profile`; it is only
    defined on regular graphs.
    """
    a_norm = g.normalized
    dec = g.spectrum
    lam = dec.eigenvalues
    th = two_layer_coeffs(phi)
    table = {
        "identity": (1.0,),
        "adjacency": (0.0, 1.0),
        "laplacian": (1.0, -1.0),
        "highpass": highpass_coeffs(a, "equation"),
        "highpass_prose": highpass_coeffs(a, "prose"),
        "k1": th["k1"],
        "k2": th["k2"],
        "combined": th["combined"],
        "trunk": trunk_coeffs(phi, a, 2),
    }
    rows = []
    for name in kernels:
        if name == "gcn_regular":
            deg = g.regular_degree()
            if deg is None or deg < 1:
                raise ValueError("gcn_regular needs a regular graph with degree >= 1")
            plain = eigendecompose(plain_normalized_laplacian(g))
            numeric = frequency_response(a_norm, plain)
            rows += [(l, name, x, y) for l, x, y in zip(plain.eigenvalues, numeric, gcn_profile(deg, plain.eigenvalues))]
            continue
        if name not in table:
            raise ValueError(f"unknown kernel {name!r}")
        numeric = frequency_response(polynomial_kernel(a_norm, table[name]), dec)
        rows += [(l, name, x, y) for l, x, y in zip(lam, numeric, polynomial_response(table[name], lam))]
    return [dict(eigenvalue=float(l), kernel=k, numeric_response=float(x), analytic_response=float(y),
                 abs_error=float(abs(x - y))) for l, k, x, y in rows]
