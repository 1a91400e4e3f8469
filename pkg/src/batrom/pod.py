"""Snapshot compression: POD and incremental HAPOD."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .mesh import COMPONENTS


@dataclass
class SnapshotSet:
    """Columns of one solution component plus where each column came from.

    ``provenance`` holds one tuple per column, typically
    ``(parameter tuple, time index, newton stage)``.
    """

    component: str
    columns: np.ndarray
    provenance: list = field(default_factory=list)

    def __post_init__(self):
        if self.component not in COMPONENTS:
            raise ValueError(f"unknown component {self.component!r}")
        cols = np.asarray(self.columns, dtype=float)
        if cols.ndim == 1:
            cols = cols[:, None]
        self.columns = cols
        if not self.provenance:
            self.provenance = [None] * cols.shape[1]
        if len(self.provenance) != cols.shape[1]:
            raise ValueError("provenance count differs from column count")

    def __len__(self):
        return self.columns.shape[1]

    @property
    def dim(self) -> int:
        return self.columns.shape[0]


@dataclass
class BasisMatrix:
    """Orthonormal modes with their singular values (nonincreasing)."""

    modes: np.ndarray
    singular_values: np.ndarray

    def __post_init__(self):
        self.modes = np.asarray(self.modes, dtype=float)
        self.singular_values = np.asarray(self.singular_values, dtype=float)
        if self.modes.shape[1] != self.singular_values.shape[0]:
            raise ValueError("one singular value per mode required")

    def __len__(self):
        return self.modes.shape[1]

    @property
    def dim(self) -> int:
        return self.modes.shape[0]

    def truncate(self, rank: int) -> "BasisMatrix":
        rank = min(int(rank), len(self))
        return BasisMatrix(self.modes[:, :rank].copy(), self.singular_values[:rank].copy())

    def project(self, x):
        return self.modes.T @ x

    def reconstruct(self, coeffs):
        return self.modes @ coeffs

    def projection_error(self, S) -> float:
        """Frobenius norm of (I - V V^T) S."""
        S = _as_matrix(S)
        return float(np.linalg.norm(S - self.modes @ (self.modes.T @ S)))


def _as_matrix(S) -> np.ndarray:
    if isinstance(S, SnapshotSet):
        return S.columns
    S = np.asarray(S, dtype=float)
    return S[:, None] if S.ndim == 1 else S


def fix_signs(modes: np.ndarray) -> np.ndarray:
    """Flip each column so that its first significant entry is positive."""
    modes = modes.copy()
    for j in range(modes.shape[1]):
        v = modes[:, j]
        big = np.abs(v) > 1e-8 * np.abs(v).max()
        if big.any() and v[np.argmax(big)] < 0:
            modes[:, j] = -v
    return modes


def truncation_rank(sv: np.ndarray, atol: float) -> int:
    """Smallest r with sqrt(sum_{k>r} sv_k^2) <= atol."""
    tail = np.sqrt(np.cumsum((sv ** 2)[::-1])[::-1])  # tail[r] = error when keeping r modes
    tail = np.append(tail, 0.0)
    return int(np.argmax(tail <= atol))


def pod(S, eps: float | None = None, rank: int | None = None, atol: float | None = None) -> BasisMatrix:
    """Proper orthogonal decomposition of the snapshot columns.

    Parameters
    ----------
    S : SnapshotSet or ndarray
    eps : float, optional
        Relative tolerance: keep the fewest modes with
        ``sqrt(sum_{k>r} s_k^2) <= eps * ||S||_F``.
    rank : int, optional
        Keep exactly this many modes (capped at the numerical rank).
    atol : float, optional
        Absolute tolerance on the discarded l2 energy.

    With none of the three given, every numerically nonzero mode is kept.
    """
    A = _as_matrix(S)
    if A.size == 0 or A.shape[1] == 0:
        raise ValueError("empty snapshot set")
    if eps is not None and eps < 0:
        raise ValueError("eps must be nonnegative")
    U, sv, _ = np.linalg.svd(A, full_matrices=False)
    nrank = int(np.sum(sv > sv[0] * max(A.shape) * np.finfo(float).eps)) if sv[0] > 0 else 0
    if rank is not None:
        r = min(rank, nrank)
    else:
        tol = 0.0
        if eps is not None:
            tol = max(tol, eps * np.sqrt(np.sum(sv ** 2)))
        if atol is not None:
            tol = max(tol, atol)
        r = min(truncation_rank(sv, tol), nrank)
    return BasisMatrix(fix_signs(U[:, :r]), sv[:r].copy())


def hapod_incremental(chunks: Sequence, eps: float, omega: float = 0.9) -> BasisMatrix:
    """Incremental hierarchical approximate POD.

    Chunks are processed left to right. Each chunk is first compressed by its
    own POD, the result (modes scaled by singular values) is appended to the
    running compressed buffer and the buffer is compressed again. With ``B``
    chunks the tree has depth ``B``; every non-root node with ``n`` underlying
    snapshots uses the absolute tolerance
    ``omega * eps_mean * sqrt(n / (B - 1))`` and the root uses
    ``sqrt(1 - omega^2) * eps * ||S||_F``, where ``eps_mean = eps ||S||_F /
    sqrt(|S|)``. This guarantees a relative l2 projection error of at most
    ``eps`` for the concatenated snapshots.
    """
    chunks = [_as_matrix(c) for c in chunks]
    if not chunks:
        raise ValueError("no chunks given")
    if not 0.0 < omega < 1.0:
        raise ValueError("omega must lie in (0, 1)")
    dims = {c.shape[0] for c in chunks}
    if len(dims) != 1:
        raise ValueError("chunks differ in dimension")
    if len(chunks) == 1:
        return pod(chunks[0], eps=eps)
    total_count = sum(c.shape[1] for c in chunks)
    total_norm = float(np.sqrt(sum(np.sum(c ** 2) for c in chunks)))
    eps_mean = eps * total_norm / np.sqrt(total_count)
    depth = len(chunks)

    def node_tol(count):
        return omega * eps_mean * np.sqrt(count / (depth - 1))

    buf = None
    count = 0
    for i, C in enumerate(chunks):
        count += C.shape[1]
        leaf = pod(C, atol=node_tol(C.shape[1]))
        scaled = leaf.modes * leaf.singular_values
        if buf is None:
            buf = scaled
            continue
        stacked = np.hstack([buf, scaled])
        if stacked.shape[1] == 0:
            buf = stacked
            continue
        if i == depth - 1:
            return pod(stacked, atol=np.sqrt(1.0 - omega ** 2) * eps * total_norm)
        node = pod(stacked, atol=node_tol(count))
        buf = node.modes * node.singular_values
    raise AssertionError("unreachable")


def split_states(states: np.ndarray, mesh) -> dict:
    """Split rows of full state vectors into component column matrices."""
    states = np.atleast_2d(states)
    return {c: states[:, mesh.component_slice(c)].T for c in COMPONENTS}


def componentwise_basis(trajectories: Iterable, eps: float = 4e-8, omega: float = 0.9,
                        include_iterates: bool = False) -> dict:
    """Component-wise reduced bases from a set of trajectories.

    Every trajectory is one HAPOD chunk per component.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("no trajectories given")
    mesh = trajectories[0].mesh
    if any(t.mesh.signature != mesh.signature for t in trajectories):
        raise ValueError("trajectories live on different meshes")
    chunks = {c: [] for c in COMPONENTS}
    for t in trajectories:
        X = t.states
        if include_iterates and t.iterates:
            X = np.vstack([X] + list(t.iterates))
        for c, cols in split_states(X, mesh).items():
            chunks[c].append(cols)
    return {c: hapod_incremental(chunks[c], eps, omega) for c in COMPONENTS}
