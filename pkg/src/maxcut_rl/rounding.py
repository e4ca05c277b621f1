"""Random-hyperplane rounding of an SDP embedding and the batched GW baseline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, cut_value
from .sdp import Embedding

GW_ALPHA = 0.878


def as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_uniform_sphere(d: int, rng, size: int | None = None) -> np.ndarray:
    """Uniform point(s) on S^{d-1}: a normalized standard Gaussian draw.

    Returns shape (d,) or, with ``size``, (size, d).  All-zero draws are
    redrawn.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    rng = as_rng(rng)
    k = 1 if size is None else size
    z = rng.standard_normal((k, d))
    norms = np.linalg.norm(z, axis=1)
    while np.any(norms == 0):
        bad = norms == 0
        z[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(z, axis=1)
    z /= norms[:, None]
    return z[0] if size is None else z


def _check_dim(e: Embedding, s: np.ndarray) -> None:
    if s.shape[-1] != e.d:
        raise ValueError(f"hyperplane dimension {s.shape[-1]} does not match embedding d={e.d}")


def round_embedding(e: Embedding, h) -> np.ndarray:
    """+1 for nodes with x_i . h >= 0, else -1."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 1:
        raise ValueError("round_embedding takes a single hyperplane normal")
    _check_dim(e, h)
    return np.where(e.vectors @ h >= 0.0, 1, -1).astype(np.int64)


def node_signs(e: Embedding, hyperplanes: np.ndarray) -> np.ndarray:
    """(K, n) matrix of sgn(x_i . s_k) with sgn(0) = +1."""
    s = np.atleast_2d(np.asarray(hyperplanes, dtype=np.float64))
    _check_dim(e, s)
    return np.where(s @ e.vectors.T >= 0.0, 1, -1).astype(np.int64)


def cut_of_hyperplane(g: Graph, e: Embedding, s) -> int:
    """sum over edges of w/2 * (1 - sgn(x_i . s) sgn(x_j . s))."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError("cut_of_hyperplane takes a single hyperplane normal")
    return int(cut_of_hyperplanes(g, e, s[None, :])[0])


def cut_of_hyperplanes(g: Graph, e: Embedding, hyperplanes: np.ndarray) -> np.ndarray:
    """Batched cut values for a (K, d) stack of normals."""
    if e.n != g.n:
        raise ValueError(f"embedding has {e.n} vectors, graph has {g.n} nodes")
    sg = node_signs(e, hyperplanes)
    prod = sg[:, g.src] * sg[:, g.dst]
    return ((1 - prod) @ g.weights) // 2


@dataclass(frozen=True)
class PgwResult:
    avg_cut: float
    max_cut: int
    incumbent: np.ndarray
    samples: int
    cuts: np.ndarray

    def to_dict(self) -> dict:
        return {"avg_cut": self.avg_cut, "max_cut": self.max_cut, "B": self.samples}


def pgw(g: Graph, e: Embedding, B: int, rng) -> PgwResult:
    """B independent uniform roundings; average cut plus the best (incumbent) cut.

    The incumbent only changes on a strict improvement, so ties keep the
    earliest sample.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    planes = sample_uniform_sphere(e.d, rng, size=B)
    cuts = cut_of_hyperplanes(g, e, planes)
    best = int(np.argmax(cuts))
    incumbent = round_embedding(e, planes[best])
    max_cut = int(cuts[best])
    assert cut_value(g, incumbent) == max_cut
    return PgwResult(
        avg_cut=float(cuts.sum()) / B,
        max_cut=max_cut,
        incumbent=incumbent,
        samples=B,
        cuts=cuts,
    )


def expected_cut_analytic(g: Graph, e: Embedding) -> float:
    """Exact mean cut over uniform hyperplanes: sum w_ij arccos(x_i . x_j) / pi."""
    if e.n != g.n:
        raise ValueError(f"embedding has {e.n} vectors, graph has {g.n} nodes")
    v = e.vectors
    dots = np.clip(np.einsum("ij,ij->i", v[g.src], v[g.dst]), -1.0, 1.0)
    return float(np.dot(g.weights, np.arccos(dots)) / np.pi)
