"""Non-episodic PPO over a batch of hyperplane chains sharing one policy.

Each of the K chains is an endless trajectory s_0, s_1, ... on the unit
sphere.  The reward for a move is the change in rounded cut value, the
value target is the one-step TD target under the collecting (old) value
head, and the policy is trained with the clipped surrogate plus a
squared value loss by plain SGD (Adam optional).
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .graph import Graph
from .policy import (
    AgentParams,
    PolicyOutput,
    backward,
    forward,
    log_prob,
    log_prob_grads,
    sample_transition,
)
from .rounding import cut_of_hyperplanes, sample_uniform_sphere
from .sdp import Embedding

log = logging.getLogger(__name__)


class PolicyCollapseError(FloatingPointError):
    """Probability ratios or losses became non-finite during training."""


@dataclass
class TrainConfig:
    K: int = 256
    T: int = 1500
    t_step: int = 16
    n_epochs: int = 4
    minibatch: int = 512
    lr: float = 1e-3
    eps_clip: float = 0.2
    gamma: float = 0.99
    seed: int = 0
    optimizer: str = "sgd"
    reward_baseline: bool = False
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        for name in ("K", "t_step", "n_epochs", "minibatch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.T < 0:
            raise ValueError("T must be >= 0")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if not 0.0 < self.eps_clip < 1.0:
            raise ValueError("eps_clip must lie in (0, 1)")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        self.adam_betas = tuple(self.adam_betas)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["adam_betas"] = list(self.adam_betas)
        return d


@dataclass
class Transition:
    """One step of every chain; all fields carry a leading chain axis.

    ``version`` tags the parameter snapshot the step was collected under.
    """

    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    v_target: np.ndarray
    logp_old: np.ndarray
    advantage: np.ndarray
    reward: np.ndarray
    version: int = 0

    def __len__(self) -> int:
        return self.s.shape[0]

    @classmethod
    def concat(cls, items: list["Transition"]) -> "Transition":
        versions = {t.version for t in items}
        if len(versions) != 1:
            raise ValueError(f"mixed parameter versions in buffer: {sorted(versions)}")
        cols = {
            name: np.concatenate([getattr(t, name) for t in items])
            for name in ("s", "a", "s_next", "v_target", "logp_old", "advantage", "reward")
        }
        return cls(**cols, version=versions.pop())

    def take(self, idx: np.ndarray) -> "Transition":
        return Transition(
            self.s[idx], self.a[idx], self.s_next[idx], self.v_target[idx],
            self.logp_old[idx], self.advantage[idx], self.reward[idx], self.version,
        )


@dataclass
class StepMetrics:
    t: int
    avg_cut: float
    max_cut: int
    mean_reward: float
    loss_ppo: float
    loss_vf: float
    wall_ms: float = 0.0


@dataclass
class ChainState:
    """Current hyperplanes (K, d) and their cached cut values (K,)."""

    s: np.ndarray
    cut: np.ndarray


def reward(g: Graph, e: Embedding, s_t, s_next, cut_t=None) -> np.ndarray:
    """Cut(s_next) - Cut(s_t); pass ``cut_t`` to reuse a cached Cut(s_t)."""
    s_t = np.atleast_2d(s_t)
    s_next = np.atleast_2d(s_next)
    if cut_t is None:
        cut_t = cut_of_hyperplanes(g, e, s_t)
    return cut_of_hyperplanes(g, e, s_next) - np.asarray(cut_t)


def init_chains(g: Graph, e: Embedding, K: int, rng: np.random.Generator) -> ChainState:
    s = sample_uniform_sphere(e.d, rng, size=K)
    return ChainState(s=s, cut=cut_of_hyperplanes(g, e, s))


def collect_step(
    chains: ChainState,
    params_old: AgentParams,
    g: Graph,
    e: Embedding,
    rng: np.random.Generator,
    gamma: float = 0.99,
    version: int = 0,
    out_t: PolicyOutput | None = None,
    reward_offset: float = 0.0,
) -> tuple[Transition, ChainState, PolicyOutput]:
    """Advance every chain by one policy step.

    Returns the transition batch, the advanced chains and the old-policy
    forward pass at the new states (reusable as ``out_t`` next step while
    the parameters are unchanged).  ``reward_offset`` is subtracted from
    the reward before it enters the TD target.
    """
    if out_t is None:
        out_t = forward(params_old, chains.s)
    a, s_next = sample_transition(out_t, rng)
    cut_next = cut_of_hyperplanes(g, e, s_next)
    r = (cut_next - chains.cut).astype(np.float64)
    out_next = forward(params_old, s_next)
    v_target = (r - reward_offset) + gamma * out_next.value
    advantage = v_target - out_t.value
    tr = Transition(
        s=chains.s,
        a=a,
        s_next=s_next,
        v_target=v_target,
        logp_old=log_prob(out_t, a),
        advantage=advantage,
        reward=r,
        version=version,
    )
    return tr, ChainState(s=s_next, cut=cut_next), out_next


def _agent_objective(params: AgentParams, batch: Transition, eps_clip: float, want_grad: bool):
    out = forward(params, batch.s)
    logp = log_prob(out, batch.a)
    with np.errstate(over="ignore", invalid="ignore"):
        ratio = np.exp(logp - batch.logp_old)
    if not np.all(np.isfinite(ratio)):
        bad = int(np.sum(~np.isfinite(ratio)))
        raise PolicyCollapseError(f"{bad} non-finite probability ratios (policy collapse)")
    adv = batch.advantage
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * adv
    l_ppo = float(np.mean(np.minimum(surr1, surr2)))
    resid = batch.v_target - out.value
    l_vf = float(np.mean(resid * resid))
    l_agent = -l_ppo + l_vf
    if not math.isfinite(l_agent):
        raise PolicyCollapseError(f"non-finite loss (ppo={l_ppo}, vf={l_vf})")
    if not want_grad:
        return l_ppo, l_vf, l_agent, None

    n = len(batch)
    # d min(surr1, surr2) / d logp: surr1 branch is ratio * adv, clipped branch is flat
    d_logp = -np.where(surr1 <= surr2, ratio * adv, 0.0) / n
    g_mean, g_var = log_prob_grads(out, batch.a)
    grads = backward(
        params,
        out,
        d_value=-2.0 * resid / n,
        d_mean=g_mean * d_logp[:, None],
        d_var=g_var * d_logp[:, None],
    )
    return l_ppo, l_vf, l_agent, grads


def ppo_losses(params: AgentParams, batch: Transition, eps_clip: float = 0.2) -> tuple[float, float, float]:
    """(L_PPO, L_VF, L_agent) with L_agent = -L_PPO + L_VF, batch means."""
    l_ppo, l_vf, l_agent, _ = _agent_objective(params, batch, eps_clip, want_grad=False)
    return l_ppo, l_vf, l_agent


def ppo_loss_and_grad(params: AgentParams, batch: Transition, eps_clip: float = 0.2):
    """Losses plus the exact gradient of L_agent w.r.t. every weight block."""
    return _agent_objective(params, batch, eps_clip, want_grad=True)


class _Adam:
    def __init__(self, params: AgentParams, betas, eps):
        self.m = AgentParams.zeros_like(params)
        self.v = AgentParams.zeros_like(params)
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0

    def direction(self, grads: AgentParams) -> list[np.ndarray]:
        self.t += 1
        out = []
        for m, v, g in zip(self.m.blocks(), self.v.blocks(), grads.blocks()):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            mhat = m / (1 - self.b1 ** self.t)
            vhat = v / (1 - self.b2 ** self.t)
            out.append(mhat / (np.sqrt(vhat) + self.eps))
        return out


def update(
    params: AgentParams,
    buffer: list[Transition],
    config: TrainConfig,
    rng: np.random.Generator,
    version: int | None = None,
    optimizer: _Adam | None = None,
) -> tuple[AgentParams, tuple[float, float]]:
    """Run ``n_epochs`` passes of shuffled minibatch descent on L_agent.

    Every buffered transition must carry ``version`` (the snapshot that
    collected it).  Returns the new parameters and the (L_PPO, L_VF) of
    the last minibatch.  ``params`` itself is not modified.
    """
    if not buffer:
        log.warning("update called with an empty buffer; skipping")
        return params, (math.nan, math.nan)
    data = Transition.concat(buffer)
    if version is not None and data.version != version:
        raise RuntimeError(f"buffer collected under version {data.version}, params are version {version}")

    new = params.copy()
    n = len(data)
    mb = min(config.minibatch, n)
    last = (math.nan, math.nan)
    for _ in range(config.n_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, mb):
            batch = data.take(perm[start:start + mb])
            l_ppo, l_vf, _, grads = ppo_loss_and_grad(new, batch, config.eps_clip)
            last = (l_ppo, l_vf)
            if config.lr == 0.0:
                continue
            steps = optimizer.direction(grads) if optimizer is not None else grads.blocks()
            for w, step in zip(new.blocks(), steps):
                w -= config.lr * step
    return new, last


def max_ratio_deviation(params: AgentParams, batch: Transition) -> float:
    """max |ratio - 1| of the buffered actions under ``params``."""
    out = forward(params, batch.s)
    return float(np.max(np.abs(np.exp(log_prob(out, batch.a) - batch.logp_old) - 1.0)))


class Trainer:
    """Stateful driver for the chain/update loop; ``train`` wraps it."""

    def __init__(self, g: Graph, e: Embedding, config: TrainConfig, params: AgentParams,
                 check_ratio: bool = True):
        if params.d != e.d:
            raise ValueError(f"network input d={params.d} does not match embedding d={e.d}")
        if e.n != g.n:
            raise ValueError("embedding and graph sizes differ")
        self.g, self.e, self.config = g, e, config
        self.params = params.copy()
        self.params_old = params.copy()
        self.version = 0
        self.check_ratio = check_ratio
        seq = np.random.SeedSequence(config.seed)
        init_seq, act_seq, mb_seq = seq.spawn(3)
        self.rng_actions = np.random.default_rng(act_seq)
        self.rng_minibatch = np.random.default_rng(mb_seq)
        self.chains = init_chains(g, e, config.K, np.random.default_rng(init_seq))
        self.buffer: list[Transition] = []
        self.optimizer = _Adam(self.params, config.adam_betas, config.adam_eps) if config.optimizer == "adam" else None
        self.t = 0
        self.last_losses = (math.nan, math.nan)
        self.best_cut = int(self.chains.cut.max())
        self.best_state = self.chains.s[int(self.chains.cut.argmax())].copy()
        self._mean_reward = 0.0
        self._reward_count = 0
        self._cached_out: PolicyOutput | None = None

    def step(self) -> StepMetrics:
        cfg = self.config
        offset = self._mean_reward if cfg.reward_baseline else 0.0
        tr, self.chains, out_next = collect_step(
            self.chains, self.params_old, self.g, self.e, self.rng_actions,
            gamma=cfg.gamma, version=self.version, out_t=self._cached_out, reward_offset=offset,
        )
        self._cached_out = out_next
        self.buffer.append(tr)
        if cfg.reward_baseline:
            k = len(tr)
            self._reward_count += k
            self._mean_reward += (float(tr.reward.sum()) - k * self._mean_reward) / self._reward_count

        cuts = self.chains.cut
        k_best = int(cuts.argmax())
        if cuts[k_best] > self.best_cut:
            self.best_cut = int(cuts[k_best])
            self.best_state = self.chains.s[k_best].copy()

        if (self.t + 1) % cfg.t_step == 0:
            self._update()
        m = StepMetrics(
            t=self.t,
            avg_cut=float(cuts.sum()) / len(cuts),
            max_cut=int(cuts[k_best]),
            mean_reward=float(tr.reward.mean()),
            loss_ppo=self.last_losses[0],
            loss_vf=self.last_losses[1],
        )
        self.t += 1
        return m

    def _update(self) -> None:
        if self.check_ratio and self.buffer:
            dev = max_ratio_deviation(self.params, Transition.concat(self.buffer))
            if dev > 1e-12:
                raise RuntimeError(f"ratio at identity deviates by {dev:.3e}; buffer is off-policy")
        self.params, self.last_losses = update(
            self.params, self.buffer, self.config, self.rng_minibatch,
            version=self.version, optimizer=self.optimizer,
        )
        self.buffer = []
        self.params_old = self.params.copy()
        self.version += 1
        self._cached_out = None


def train(
    g: Graph,
    e: Embedding,
    config: TrainConfig,
    params: AgentParams,
    on_step: Callable[[StepMetrics, Trainer], None] | None = None,
    deterministic: bool = True,
) -> tuple[AgentParams, list[StepMetrics]]:
    """Run T steps; an update fires after every ``t_step`` steps.

    Metrics are recorded every step from the chain states after the move.
    With ``deterministic`` the wall-clock column is left at 0 so metric
    streams are byte-reproducible.
    """
    trainer = Trainer(g, e, config, params)
    metrics: list[StepMetrics] = []
    t0 = time.perf_counter()
    for _ in range(config.T):
        m = trainer.step()
        if not deterministic:
            m.wall_ms = (time.perf_counter() - t0) * 1e3
        metrics.append(m)
        if on_step is not None:
            on_step(m, trainer)
    return trainer.params, metrics
