"""Shared-encoder actor-critic network with a diagonal Gaussian policy.

Architecture (no biases)::

    h     = ReLU(W_enc^T s)          (l,)
    value = w_v . h                  scalar
    mean  = W_m^T h                  (d,)
    var   = softplus(W_c^T h)        (d,)

All routines work on batches: states are (K, d) arrays and every output
carries the leading batch axis.  Gradients are derived by hand.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._io import atomic_write_bytes

CHECKPOINT_VERSION = 1
MAX_ZERO_RESAMPLES = 8
_CKPT_HEADER = struct.Struct("<QQQ")
_LOG_2PI = math.log(2.0 * math.pi)


class ZeroActionError(RuntimeError):
    """An action had zero norm and cannot be mapped onto the sphere."""


def softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass
class AgentParams:
    """Weights ``W_enc (d, l)``, ``w_v (l,)``, ``W_m (l, d)``, ``W_c (l, d)``.

    The value function uses {W_enc, w_v}; the policy uses {W_enc, W_m, W_c}.
    Gradients are returned in the same container.
    """

    W_enc: np.ndarray
    w_v: np.ndarray
    W_m: np.ndarray
    W_c: np.ndarray

    def __post_init__(self):
        d, l = self.W_enc.shape
        if self.w_v.shape != (l,) or self.W_m.shape != (l, d) or self.W_c.shape != (l, d):
            raise ValueError(
                f"inconsistent shapes: W_enc {self.W_enc.shape}, w_v {self.w_v.shape}, "
                f"W_m {self.W_m.shape}, W_c {self.W_c.shape}"
            )

    @property
    def d(self) -> int:
        return self.W_enc.shape[0]

    @property
    def l(self) -> int:
        return self.W_enc.shape[1]

    def blocks(self) -> tuple[np.ndarray, ...]:
        return (self.W_enc, self.w_v, self.W_m, self.W_c)

    def copy(self) -> "AgentParams":
        return AgentParams(*(b.copy() for b in self.blocks()))

    @classmethod
    def zeros_like(cls, other: "AgentParams") -> "AgentParams":
        return cls(*(np.zeros_like(b) for b in other.blocks()))

    def flat(self) -> np.ndarray:
        return np.concatenate([b.ravel() for b in self.blocks()])

    @classmethod
    def from_flat(cls, vec: np.ndarray, d: int, l: int) -> "AgentParams":
        sizes = [d * l, l, l * d, l * d]
        parts = [x.copy() for x in np.split(np.asarray(vec, dtype=np.float64), np.cumsum(sizes)[:-1])]
        return cls(parts[0].reshape(d, l), parts[1], parts[2].reshape(l, d), parts[3].reshape(l, d))

    def equals(self, other: "AgentParams") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.blocks(), other.blocks()))


def init_params(d: int, l: int, seed) -> AgentParams:
    """Entries i.i.d. uniform on +-1/sqrt(fan_in); draw order W_enc, w_v, W_m, W_c."""
    if d < 1 or l < 1:
        raise ValueError("d and l must be >= 1")
    rng = np.random.default_rng(seed)
    be, bh = 1.0 / math.sqrt(d), 1.0 / math.sqrt(l)
    return AgentParams(
        W_enc=rng.uniform(-be, be, size=(d, l)),
        w_v=rng.uniform(-bh, bh, size=l),
        W_m=rng.uniform(-bh, bh, size=(l, d)),
        W_c=rng.uniform(-bh, bh, size=(l, d)),
    )


@dataclass
class PolicyOutput:
    value: np.ndarray   # (K,)
    mean: np.ndarray    # (K, d)
    var: np.ndarray     # (K, d)
    hidden: np.ndarray  # (K, l), post-ReLU
    states: np.ndarray | None = None
    pre_hidden: np.ndarray | None = None
    pre_var: np.ndarray | None = None


def forward(p: AgentParams, s: np.ndarray) -> PolicyOutput:
    s = np.atleast_2d(np.asarray(s, dtype=np.float64))
    if s.shape[1] != p.d:
        raise ValueError(f"state dimension {s.shape[1]} does not match network input d={p.d}")
    pre = s @ p.W_enc
    h = np.maximum(pre, 0.0)
    z = h @ p.W_c
    return PolicyOutput(
        value=h @ p.w_v,
        mean=h @ p.W_m,
        var=softplus(z),
        hidden=h,
        states=s,
        pre_hidden=pre,
        pre_var=z,
    )


def sample_action(out: PolicyOutput, rng: np.random.Generator) -> np.ndarray:
    """a = mean + sqrt(var) * z, z ~ N(0, I)."""
    z = rng.standard_normal(out.mean.shape)
    return out.mean + np.sqrt(out.var) * z


def log_prob(out: PolicyOutput, a: np.ndarray) -> np.ndarray:
    """Log-density of a diagonal Gaussian, summed over action coordinates."""
    a = np.atleast_2d(a)
    diff = a - out.mean
    return np.sum(-0.5 * (_LOG_2PI + np.log(out.var)) - diff * diff / (2.0 * out.var), axis=1)


def log_prob_grads(out: PolicyOutput, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """d log_prob / d mean and d log_prob / d var, each (K, d)."""
    diff = np.atleast_2d(a) - out.mean
    d_mean = diff / out.var
    d_var = -0.5 / out.var + 0.5 * diff * diff / (out.var * out.var)
    return d_mean, d_var


def transition(a: np.ndarray) -> np.ndarray:
    """Project action(s) onto the unit sphere; raises ZeroActionError on a zero row."""
    a = np.asarray(a, dtype=np.float64)
    norms = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ZeroActionError("zero-norm action")
    return a / norms


def sample_transition(out: PolicyOutput, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Sample actions and the next states, redrawing zero-norm rows.

    Gives up after MAX_ZERO_RESAMPLES consecutive zero draws for any row.
    """
    a = sample_action(out, rng)
    for _ in range(MAX_ZERO_RESAMPLES):
        zero = np.linalg.norm(a, axis=1) == 0
        if not zero.any():
            return a, transition(a)
        redraw = out.mean[zero] + np.sqrt(out.var[zero]) * rng.standard_normal((int(zero.sum()), a.shape[1]))
        a[zero] = redraw
    if np.any(np.linalg.norm(a, axis=1) == 0):
        raise ZeroActionError(f"action stayed zero after {MAX_ZERO_RESAMPLES} redraws")
    return a, transition(a)


def backward(
    p: AgentParams,
    out: PolicyOutput,
    d_value: np.ndarray | None = None,
    d_mean: np.ndarray | None = None,
    d_var: np.ndarray | None = None,
) -> AgentParams:
    """Gradient of sum_k (d_value_k * value_k + d_mean_k . mean_k + d_var_k . var_k).

    ``out`` must come from ``forward(p, states)``.  ReLU uses subgradient 0
    at 0; softplus' derivative is the logistic sigmoid.
    """
    if out.states is None or out.pre_hidden is None or out.pre_var is None:
        raise ValueError("backward needs the cached forward pass for these states")
    k = out.hidden.shape[0]
    gv = np.zeros(k) if d_value is None else np.asarray(d_value, dtype=np.float64).reshape(k)
    gm = np.zeros((k, p.d)) if d_mean is None else np.asarray(d_mean, dtype=np.float64).reshape(k, p.d)
    gs = np.zeros((k, p.d)) if d_var is None else np.asarray(d_var, dtype=np.float64).reshape(k, p.d)

    h = out.hidden
    gz = gs * sigmoid(out.pre_var)
    grad_h = np.outer(gv, p.w_v) + gm @ p.W_m.T + gz @ p.W_c.T
    grad_pre = grad_h * (out.pre_hidden > 0)
    return AgentParams(
        W_enc=out.states.T @ grad_pre,
        w_v=h.T @ gv,
        W_m=h.T @ gm,
        W_c=h.T @ gz,
    )


def save_params(path: str | Path, p: AgentParams) -> None:
    """Header (d, l, version) as little-endian u64, then the four blocks as <f8."""
    body = b"".join(np.ascontiguousarray(b, dtype="<f8").tobytes() for b in p.blocks())
    atomic_write_bytes(path, _CKPT_HEADER.pack(p.d, p.l, CHECKPOINT_VERSION) + body)


def load_params(path: str | Path) -> AgentParams:
    data = Path(path).read_bytes()
    if len(data) < _CKPT_HEADER.size:
        raise ValueError("checkpoint truncated")
    d, l, version = _CKPT_HEADER.unpack_from(data)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    body = data[_CKPT_HEADER.size:]
    expected = 8 * (d * l + l + 2 * l * d)
    if len(body) != expected:
        raise ValueError(f"checkpoint body has {len(body)} bytes, expected {expected}")
    return AgentParams.from_flat(np.frombuffer(body, dtype="<f8"), d, l)
