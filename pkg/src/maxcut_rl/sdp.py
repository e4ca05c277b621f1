"""Low-rank coordinate-descent ("mixing") solver for the MaxCut SDP relaxation."""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from ._io import atomic_write_bytes, atomic_write_text
from .graph import Graph

DEFAULT_TOL = 1e-5
DEFAULT_MAX_SWEEPS = 2000
_EMBEDDING_HEADER = struct.Struct("<QQ")


@dataclass(frozen=True)
class Embedding:
    """Unit vectors ``x_1..x_n`` in R^d stored as rows of an (n, d) array.

    Row-major (n, d) storage is the column-major layout of the d x n
    matrix whose columns are the node vectors.
    """

    vectors: np.ndarray

    def __post_init__(self):
        v = np.array(self.vectors, dtype=np.float64, copy=True)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"embedding must be a non-empty (n, d) array, got {v.shape}")
        norms = np.linalg.norm(v, axis=1)
        if np.any(norms == 0):
            raise ValueError("embedding vectors must be non-zero")
        v /= norms[:, None]
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def to_bytes(self) -> bytes:
        return _EMBEDDING_HEADER.pack(self.n, self.d) + self.vectors.astype("<f8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, data: bytes) -> "Embedding":
        if len(data) < _EMBEDDING_HEADER.size:
            raise ValueError("embedding file truncated")
        n, d = _EMBEDDING_HEADER.unpack_from(data)
        body = data[_EMBEDDING_HEADER.size:]
        if len(body) != 8 * n * d:
            raise ValueError(f"embedding body has {len(body)} bytes, expected {8 * n * d}")
        return cls(np.frombuffer(body, dtype="<f8").reshape(n, d))


@dataclass(frozen=True)
class SdpReport:
    objective: float
    iterations: int
    final_delta: float
    converged: bool

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "iterations": self.iterations,
            "final_delta": self.final_delta,
            "converged": self.converged,
        }


def default_rank(n: int) -> int:
    """min(n, ceil(sqrt(2n)) + 1)."""
    if n < 1:
        raise ValueError("n must be positive")
    c = math.isqrt(2 * n)
    if c * c < 2 * n:
        c += 1
    return min(n, c + 1)


def sdp_objective(g: Graph, e: Embedding) -> float:
    """1/2 * sum_ij w_ij (1 - x_i . x_j)."""
    if e.n != g.n:
        raise ValueError(f"embedding has {e.n} vectors, graph has {g.n} nodes")
    v = e.vectors
    dots = np.einsum("ij,ij->i", v[g.src], v[g.dst])
    return float(0.5 * np.dot(g.weights, 1.0 - dots))


def _adjacency(g: Graph):
    src = np.concatenate([g.src, g.dst])
    dst = np.concatenate([g.dst, g.src])
    w = np.concatenate([g.weights, g.weights]).astype(np.float64)
    order = np.lexsort((dst, src))
    src, dst, w = src[order], dst[order], w[order]
    indptr = np.searchsorted(src, np.arange(g.n + 1))
    return indptr, dst, w


def random_unit_rows(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal((n, d))
    norms = np.linalg.norm(v, axis=1)
    while np.any(norms == 0):
        bad = norms == 0
        v[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(v, axis=1)
    return v / norms[:, None]


def solve_sdp(
    g: Graph,
    d: int | None = None,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    seed: int = 0,
    on_update: Callable[[int, np.ndarray], None] | None = None,
) -> tuple[Embedding, SdpReport]:
    """Maximize the relaxation by cyclic exact coordinate updates.

    Each update sets ``x_i = -g_i / |g_i|`` with ``g_i = sum_j w_ij x_j``,
    the unique maximizer of the objective in ``x_i`` alone, so the
    objective never decreases.  Nodes are visited in order ``1..n``.
    A node whose ``g_i`` is exactly zero (isolated nodes included) keeps
    its current vector.  ``on_update(i, vectors)`` is called after every
    column write; it sees the live array and must not mutate it.
    """
    if d is None:
        d = default_rank(g.n)
    if d < 1:
        raise ValueError("rank d must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be >= 1")

    rng = np.random.default_rng(seed)
    v = random_unit_rows(g.n, d, rng)
    indptr, nbr, wts = _adjacency(g)
    rows = [(i, nbr[indptr[i]:indptr[i + 1]], wts[indptr[i]:indptr[i + 1]])
            for i in range(g.n) if indptr[i + 1] > indptr[i]]

    sweeps = 0
    delta = 0.0
    converged = False
    while sweeps < max_sweeps:
        delta = 0.0
        for i, nb, w in rows:
            grad = w @ v[nb]
            norm = math.sqrt(float(grad @ grad))
            if norm == 0.0:
                continue
            new = -grad / norm
            move = float(np.linalg.norm(new - v[i]))
            if move > delta:
                delta = move
            v[i] = new
            if on_update is not None:
                on_update(i, v)
        sweeps += 1
        if delta < tol:
            converged = True
            break

    emb = Embedding(v)
    report = SdpReport(
        objective=sdp_objective(g, emb),
        iterations=sweeps,
        final_delta=delta,
        converged=converged,
    )
    return emb, report


def save_embedding(path: str | Path, e: Embedding, metadata: dict | None = None) -> None:
    """Write ``path`` (binary) and ``path`` + ``.json`` (metadata)."""
    path = Path(path)
    atomic_write_bytes(path, e.to_bytes())
    meta = dict(metadata or {})
    meta.update({"n": e.n, "d": e.d})
    atomic_write_text(path.with_name(path.name + ".json"), json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_embedding(path: str | Path) -> tuple[Embedding, dict]:
    path = Path(path)
    emb = Embedding.from_bytes(path.read_bytes())
    meta_path = path.with_name(path.name + ".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return emb, meta
