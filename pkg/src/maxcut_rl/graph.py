"""Graph container, Gset/JSON I/O, seeded Erdos-Renyi generation and cut evaluation."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

# SplitMix64 constants used by the counter-based ER generator.
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_MULT_1 = 0xBF58476D1CE4E5B9
MIX_MULT_2 = 0x94D049BB133111EB

BRUTE_FORCE_MAX_N = 24


class GsetParseError(ValueError):
    """Malformed Gset text; ``line`` is the 1-based offending line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Graph:
    """Undirected graph on nodes ``1..n`` with canonical (i < j) weighted edges.

    Edges are kept in lexicographic order so every sum over them is
    evaluated in the same order.
    """

    n: int
    edges: tuple[tuple[int, int, int], ...]
    _arrays: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("graph needs at least one node")
        canon = []
        seen = set()
        for i, j, w in self.edges:
            i, j, w = int(i), int(j), int(w)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if i > j:
                i, j = j, i
            if i < 1 or j > self.n:
                raise ValueError(f"edge ({i}, {j}) outside 1..{self.n}")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))
            canon.append((i, j, w))
        canon.sort()
        object.__setattr__(self, "edges", tuple(canon))
        if canon:
            arr = np.asarray(canon, dtype=np.int64)
            src, dst, w = arr[:, 0] - 1, arr[:, 1] - 1, arr[:, 2]
        else:
            src = dst = w = np.zeros(0, dtype=np.int64)
        for a in (src, dst, w):
            a.setflags(write=False)
        object.__setattr__(self, "_arrays", (src, dst, w))

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def src(self) -> np.ndarray:
        """0-based first endpoints."""
        return self._arrays[0]

    @property
    def dst(self) -> np.ndarray:
        """0-based second endpoints."""
        return self._arrays[1]

    @property
    def weights(self) -> np.ndarray:
        return self._arrays[2]

    @property
    def total_weight(self) -> int:
        return int(self.weights.sum())

    @property
    def is_unit_weight(self) -> bool:
        return bool(np.all(self.weights == 1))

    def to_json_dict(self) -> dict:
        return {"n": self.n, "edges": [list(e) for e in self.edges]}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), separators=(",", ":"))

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @classmethod
    def from_json_dict(cls, data: dict) -> "Graph":
        edges = []
        for e in data["edges"]:
            if len(e) == 2:
                edges.append((e[0], e[1], 1))
            else:
                edges.append((e[0], e[1], e[2]))
        return cls(int(data["n"]), tuple(edges))


def parse_gset(text: str | Iterable[str]) -> Graph:
    """Parse the Gset edge-list format: header ``n m`` then ``i j w`` lines (1-based)."""
    lines = text.splitlines() if isinstance(text, str) else list(text)
    header = None
    edges: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int]] = set()
    n = m = 0
    for lineno, raw in enumerate(lines, start=1):
        parts = raw.split()
        if not parts:
            continue
        if header is None:
            if len(parts) != 2:
                raise GsetParseError(lineno, "header must be 'n m'")
            try:
                n, m = int(parts[0]), int(parts[1])
            except ValueError:
                raise GsetParseError(lineno, "header must contain two integers") from None
            if n < 1 or m < 0:
                raise GsetParseError(lineno, "header needs n >= 1 and m >= 0")
            header = lineno
            continue
        if len(parts) not in (2, 3):
            raise GsetParseError(lineno, "edge line must be 'i j w'")
        try:
            i, j = int(parts[0]), int(parts[1])
            w = int(parts[2]) if len(parts) == 3 else 1
        except ValueError:
            raise GsetParseError(lineno, "edge fields must be integers") from None
        if not (1 <= i <= n and 1 <= j <= n):
            raise GsetParseError(lineno, f"node index out of range 1..{n}")
        if i == j:
            raise GsetParseError(lineno, f"self-loop at node {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise GsetParseError(lineno, f"duplicate edge {key}")
        seen.add(key)
        edges.append((key[0], key[1], w))
    if header is None:
        raise GsetParseError(1, "missing 'n m' header")
    if len(edges) != m:
        raise GsetParseError(len(lines), f"header declares {m} edges, found {len(edges)}")
    return Graph(n, tuple(edges))


def format_gset(g: Graph) -> str:
    rows = [f"{g.n} {g.m}"] + [f"{i} {j} {w}" for i, j, w in g.edges]
    return "\n".join(rows) + "\n"


def load_graph(path: str | Path) -> Graph:
    """Read a graph from a ``.json`` export or a Gset text file."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        return Graph.from_json_dict(json.loads(text))
    return parse_gset(text)


def _splitmix64(z: np.ndarray) -> np.ndarray:
    # uint64 arithmetic wraps mod 2**64
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX_MULT_1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX_MULT_2)
    return z ^ (z >> np.uint64(31))


def pair_uniforms(n: int, seed: int) -> np.ndarray:
    """Uniforms in [0, 1) for the n(n-1)/2 node pairs in canonical order.

    Pair number ``k`` gets ``splitmix64(seed + (k + 1) * GOLDEN_GAMMA) >> 11``
    scaled by 2**-53, so the stream is a pure function of (seed, k).
    """
    count = n * (n - 1) // 2
    k = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed % (1 << 64)) + k * np.uint64(GOLDEN_GAMMA)
        z = _splitmix64(z)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def generate_er(n: int, p: float, seed: int) -> Graph:
    """G(n, p) with every pair kept iff its counter-based uniform is below ``p``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"edge probability must lie in [0, 1], got {p}")
    if n < 1:
        raise ValueError("n must be positive")
    u = pair_uniforms(n, seed)
    iu, ju = np.triu_indices(n, k=1)
    keep = u < p
    edges = tuple(zip((iu[keep] + 1).tolist(), (ju[keep] + 1).tolist(), [1] * int(keep.sum())))
    return Graph(n, edges)


def cut_value(g: Graph, assignment) -> int:
    """Weighted number of edges whose endpoints carry opposite signs."""
    x = np.asarray(assignment)
    if x.shape != (g.n,):
        raise ValueError(f"assignment length {x.shape} does not match n={g.n}")
    if not np.all(np.abs(x) == 1):
        raise ValueError("assignment entries must be -1 or +1")
    cross = x[g.src] != x[g.dst]
    return int(g.weights[cross].sum())


def cut_values(g: Graph, assignments: np.ndarray) -> np.ndarray:
    """Batched cut_value over rows of a (B, n) +-1 matrix."""
    x = np.asarray(assignments)
    cross = x[:, g.src] != x[:, g.dst]
    return cross.astype(np.int64) @ g.weights


def _enumerate_cuts(g: Graph, fix_first: bool, chunk: int = 1 << 14):
    bits = g.n - 1 if fix_first else g.n
    total = 1 << bits
    best, best_code = None, 0
    for start in range(0, total, chunk):
        codes = np.arange(start, min(start + chunk, total), dtype=np.int64)
        shifts = np.arange(bits, dtype=np.int64)
        b = ((codes[:, None] >> shifts) & 1).astype(np.int8)
        x = 1 - 2 * b
        if fix_first:
            x = np.hstack([np.ones((len(codes), 1), dtype=np.int8), x])
        vals = cut_values(g, x)
        k = int(np.argmax(vals))
        if best is None or vals[k] > best:
            best, best_code = int(vals[k]), x[k].astype(np.int64)
    return best, best_code


def brute_force_maxcut(g: Graph) -> tuple[int, np.ndarray]:
    """Exact MaxCut by enumeration with node 1 pinned to +1."""
    if g.n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force refused for n={g.n} > {BRUTE_FORCE_MAX_N}")
    return _enumerate_cuts(g, fix_first=True)


def brute_force_maxcut_unreduced(g: Graph) -> tuple[int, np.ndarray]:
    """Enumeration over all 2**n assignments; cross-check for the reduced search."""
    if g.n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force refused for n={g.n} > {BRUTE_FORCE_MAX_N}")
    return _enumerate_cuts(g, fix_first=False)


def complete_graph(n: int) -> Graph:
    return Graph(n, tuple((i, j, 1) for i in range(1, n + 1) for j in range(i + 1, n + 1)))


def cycle_graph(n: int) -> Graph:
    return Graph(n, tuple((i, i % n + 1, 1) for i in range(1, n + 1)))
