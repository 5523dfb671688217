"""DDPG bidder with an optional mean-field (opponent-aware) critic.

State is ``<budget left, pCTR>``, the action ``a`` in [0, 1] maps to the bid
``floor(min(b_max * a, budget))`` and the reward is the pCTR of won auctions.

With ``use_opponent_model`` the critic marginalizes an inner network
``Q(s, a, z)`` over the opponent model's market-price pdf for the current
request, keeping only buckets the bid would beat::

    Q(s, a) = sum_j pdf[j] * 1[j < b_f(a)] * Q_inner(s, a, j / b_max)

The hard indicator is piecewise constant in ``a`` and contributes no gradient;
``indicator="sigmoid"`` swaps in a smooth relaxation for ablations.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from mfbid.agents.base import AgentFeedback, AgentState
from mfbid.agents.replay import ReplayMemory, Transition, TransitionBatch
from mfbid.data import BidRequest
from mfbid.errors import ConfigurationError
from mfbid.nn import autodiff as ad
from mfbid.nn.autodiff import Tensor
from mfbid.nn.checkpoint import load_params, save_params
from mfbid.nn.layers import init_mlp, mlp, mlp_numpy
from mfbid.nn.optim import Adam, OptimizerConfig
from mfbid.nn.params import ParamSet


@dataclass
class DdpgConfig:
    b_max: int = 300
    gamma: float = 1.0
    tau: float = 0.01
    noise_sigma: float = 0.1
    noise_decay: float = 0.999
    minibatch: int = 32
    update_period: int = 1000
    updates_per_period: int = 1
    replay_capacity: int = 1000
    hidden: tuple[int, ...] = (64, 64)
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    lr_decay: float = 0.999
    use_opponent_model: bool = False
    indicator: str = "hard"
    indicator_temperature: float = 0.05
    meanfield_target: bool = True
    ctr_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError("gamma must lie in [0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigurationError("tau must lie in (0, 1]")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be >= 0")
        for name in ("minibatch", "update_period", "updates_per_period", "replay_capacity"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.minibatch > self.replay_capacity:
            raise ConfigurationError("minibatch cannot exceed replay capacity")
        if self.indicator not in ("hard", "sigmoid"):
            raise ConfigurationError(f"unknown indicator {self.indicator!r}")
        if self.b_max < 2:
            raise ConfigurationError("b_max must be >= 2")
        if self.ctr_scale <= 0:
            raise ConfigurationError("ctr_scale must be > 0")


def to_bid_price(action: float, budget_left: float, b_max: int) -> int:
    """``b_f = min(b_max * a, B)``, clipped to the budget first and then floored."""
    return int(math.floor(min(b_max * action, budget_left)))


def init_actor(params: ParamSet, hidden, rng) -> int:
    sizes = [2, *hidden, 1]
    init_mlp(params, "actor", sizes, rng)
    return len(sizes) - 1


def init_critic(params: ParamSet, hidden, rng, meanfield: bool) -> int:
    sizes = [4 if meanfield else 3, *hidden, 1]
    init_mlp(params, "critic", sizes, rng)
    return len(sizes) - 1


def actor_forward(params: ParamSet, states, n_layers: int) -> Tensor:
    return mlp(ad.as_tensor(states), params, "actor", n_layers, output="sigmoid")


def critic_q(params: ParamSet, states, action: Tensor, n_layers: int) -> Tensor:
    """Plain critic ``Q(s, a)`` on concatenated (budget, pCTR, a); returns shape (M,)."""
    x = ad.concat([ad.as_tensor(states), action], axis=-1)
    out = mlp(x, params, "critic", n_layers)
    return ad.reshape(out, (out.shape[0],))


def critic_q_meanfield(params: ParamSet, states, action: Tensor, budget: np.ndarray,
                       pdf: np.ndarray, b_max: int, n_layers: int, indicator: str = "hard",
                       temperature: float = 0.05) -> Tensor:
    """Discretized opponent-marginalized critic; returns shape (M,).

    ``states`` are the normalized (M, 2) inputs, ``budget`` the raw budget left
    (for the budget clip inside ``b_f``) and ``pdf`` the (M, b_max) opponent
    market pdf of each row's request.
    """
    states = np.asarray(states, dtype=np.float64)
    m, j = pdf.shape
    a = action.data.reshape(m)
    if indicator == "hard":
        return _meanfield_hard(params, states, action, budget, pdf, b_max, n_layers)
    buckets = np.arange(1, j + 1, dtype=np.float64)
    s3 = np.broadcast_to(states[:, None, :], (m, j, 2))
    z3 = np.broadcast_to((buckets / b_max)[None, :, None], (m, j, 1))
    a3 = ad.broadcast_to(ad.reshape(action, (m, 1, 1)), (m, j, 1))
    inner = mlp(ad.concat([s3, a3, z3], axis=-1), params, "critic", n_layers)
    inner = ad.reshape(inner, (m, j))
    # smooth relaxation; rows clipped by their budget see a constant boundary
    clipped = (b_max * a >= budget).astype(np.float64)[:, None]
    boundary = ad.reshape(action, (m, 1)) * (b_max * (1.0 - clipped)) + budget[:, None] * clipped
    soft = ad.sigmoid((boundary - buckets[None, :]) * (1.0 / (temperature * b_max)))
    return ad.sum(inner * soft * pdf, axis=1)


def _meanfield_hard(params: ParamSet, states: np.ndarray, action: Tensor, budget: np.ndarray,
                    pdf: np.ndarray, b_max: int, n_layers: int) -> Tensor:
    # Only (row, bucket) pairs under the row's own bid carry weight, so the
    # inner network runs on those pairs alone and the sum is taken per row.
    m = pdf.shape[0]
    b_f = np.floor(np.minimum(b_max * action.data.reshape(m), budget))
    rows, cols = np.nonzero(np.arange(1, pdf.shape[1] + 1)[None, :] < b_f[:, None])
    if len(rows) == 0:
        return ad.reshape(action, (m,)) * 0.0
    z = ((cols + 1) / b_max)[:, None]
    x = ad.concat([states[rows], ad.take_rows(action, rows), z], axis=-1)
    inner = mlp(x, params, "critic", n_layers) * pdf[rows, cols][:, None]
    segments = np.zeros((m, len(rows)))
    segments[rows, np.arange(len(rows))] = 1.0
    return ad.reshape(ad.matmul(segments, inner), (m,))


class DdpgAgent:
    def __init__(self, name: str, config: DdpgConfig, opponent=None,
                 rng: np.random.Generator | None = None):
        if config.use_opponent_model:
            if opponent is None:
                raise ConfigurationError(f"{name}: use_opponent_model=True needs a trained opponent model")
            if opponent.b_max != config.b_max:
                raise ConfigurationError(
                    f"{name}: opponent model b_max {opponent.b_max} != agent b_max {config.b_max}")
        self.name = name
        self.config = config
        self.opponent = opponent if config.use_opponent_model else None
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        init_rng = np.random.default_rng([config.seed, 7])
        self.actor = ParamSet()
        self.n_actor = init_actor(self.actor, config.hidden, init_rng)
        self.critic = ParamSet()
        self.n_critic = init_critic(self.critic, config.hidden, init_rng, config.use_opponent_model)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor, OptimizerConfig(config.actor_lr, config.lr_decay))
        self.critic_opt = Adam(self.critic, OptimizerConfig(config.critic_lr, config.lr_decay))
        self.memory = ReplayMemory(config.replay_capacity)
        self.noise_sigma = config.noise_sigma
        self.budget_scale = 1.0
        self.steps = 0
        self.updates = 0
        self.last_losses: tuple[float, float] | None = None
        self._pending: list | None = None

    # ---------------------------------------------------------------- acting

    def normalize(self, budget, pctr) -> np.ndarray:
        return np.stack([np.asarray(budget, dtype=np.float64) / self.budget_scale,
                         np.asarray(pctr, dtype=np.float64) / self.config.ctr_scale], axis=-1)

    def policy(self, state: AgentState) -> float:
        """Deterministic actor output ``pi(s)``."""
        x = self.normalize([state.budget_left], [state.pctr])
        return float(mlp_numpy(x, self.actor, "actor", self.n_actor, output="sigmoid")[0, 0])

    def act(self, state: AgentState, noise_sigma: float | None = None) -> float:
        sigma = self.noise_sigma if noise_sigma is None else noise_sigma
        a = self.policy(state)
        if sigma > 0:
            a += self.rng.normal(0.0, sigma)
        return min(max(a, 0.0), 1.0)

    # ---------------------------------------------------------------- env protocol

    def begin_epoch(self, budget: int) -> None:
        self.budget_scale = float(max(budget, 1))
        self._pending = None

    def bid(self, request: BidRequest, pctr: float, budget_left: int) -> int:
        state = AgentState(int(budget_left), float(pctr))
        if self._pending is not None:
            s, a, r, feats = self._pending
            self._store(Transition(s, a, r, state, False, feats, request.features))
        a = self.act(state)
        self._pending = [state, a, 0.0, request.features]
        return to_bid_price(a, budget_left, self.config.b_max)

    def observe(self, feedback: AgentFeedback) -> None:
        if self._pending is None:
            return
        self._pending[2] = feedback.reward
        if feedback.terminal:
            s, a, r, feats = self._pending
            self._store(Transition(s, a, r, AgentState(feedback.budget_left, 0.0), True, feats, feats))
            self._pending = None

    def end_epoch(self) -> None:
        if self._pending is not None:
            s, a, r, feats = self._pending
            self._store(Transition(s, a, r, AgentState(s.budget_left, 0.0), True, feats, feats))
            self._pending = None
        self.noise_sigma *= self.config.noise_decay
        self.actor_opt.decay()
        self.critic_opt.decay()

    def _store(self, t: Transition) -> None:
        self.memory.push(t)
        self.steps += 1
        cfg = self.config
        if self.steps % cfg.update_period == 0 and len(self.memory) >= cfg.minibatch:
            for _ in range(cfg.updates_per_period):
                self.last_losses = self.update()

    # ---------------------------------------------------------------- learning

    def _q(self, params: ParamSet, states, action: Tensor, budget, pdf) -> Tensor:
        if self.opponent is None:
            return critic_q(params, states, action, self.n_critic)
        cfg = self.config
        return critic_q_meanfield(params, states, action, budget, pdf, cfg.b_max, self.n_critic,
                                  cfg.indicator, cfg.indicator_temperature)

    def _pdf(self, feature_rows) -> np.ndarray | None:
        if self.opponent is None:
            return None
        return self.opponent.pdf_batch(feature_rows)

    def update(self, batch: TransitionBatch | None = None) -> tuple[float, float]:
        """One critic step, one actor step and a soft target update; returns both losses."""
        cfg = self.config
        if batch is None:
            batch = self.memory.sample(cfg.minibatch, self.rng)
        s = self.normalize(batch.budget, batch.pctr)
        s2 = self.normalize(batch.next_budget, batch.next_pctr)
        pdf = self._pdf(batch.features)

        with ad.no_grad():
            a2 = mlp_numpy(s2, self.actor_target, "actor", self.n_actor, output="sigmoid")
            if self.opponent is not None and not cfg.meanfield_target:
                raise ConfigurationError("mean-field critic requires meanfield_target=True")
            q2 = self._q(self.critic_target, s2, Tensor(a2), batch.next_budget,
                         self._pdf(batch.next_features)).data
        y = batch.reward + cfg.gamma * np.where(batch.terminal, 0.0, q2)

        q = self._q(self.critic, s, Tensor(batch.action[:, None]), batch.budget, pdf)
        critic_loss = ad.mean((q - y) ** 2)
        ad.backward(critic_loss)
        self.critic_opt.step()

        a_pi = actor_forward(self.actor, s, self.n_actor)
        actor_loss = -ad.mean(self._q(self.critic, s, a_pi, batch.budget, pdf))
        ad.backward(actor_loss)
        self.actor_opt.step()
        self.critic.zero_grad()

        self.actor_target.soft_update_from(self.actor, cfg.tau)
        self.critic_target.soft_update_from(self.critic, cfg.tau)
        self.updates += 1
        return critic_loss.item(), actor_loss.item()

    # ---------------------------------------------------------------- persistence

    def save(self, path) -> None:
        both = ParamSet()
        for p, t in self.actor.items():
            both.add(p, t.data)
        for p, t in self.critic.items():
            both.add(p, t.data)
        cfg = asdict(self.config)
        cfg["hidden"] = list(cfg["hidden"])
        save_params(path, both, {"kind": "ddpg", "name": self.name, "config": cfg})

    def load_weights(self, path) -> None:
        params, meta = load_params(path)
        if meta.get("kind") != "ddpg":
            raise ConfigurationError(f"{path} is not a DDPG checkpoint")
        self.actor.assign({p: params[p].data for p in self.actor})
        self.critic.assign({p: params[p].data for p in self.critic})
        self.actor_target.assign(self.actor.to_dict())
        self.critic_target.assign(self.critic.to_dict())
