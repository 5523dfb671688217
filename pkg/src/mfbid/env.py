"""Repeated second-price auctions with per-epoch budgets and censored feedback.

Clearing only ever looks at the simulated agents' bids. Logged historical
prices feed the CPM budget and nothing else.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from mfbid.agents.base import AgentFeedback
from mfbid.data import BidRequest, episode_budget
from mfbid.errors import ConfigurationError, InputError, ProtocolError

log = logging.getLogger(__name__)


@dataclass
class EpisodeConfig:
    auctions_per_epoch: int = 1000
    budget_ratio: float = 0.25
    cpm_train: float = 1000.0
    num_epochs: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.auctions_per_epoch <= 0:
            raise ConfigurationError("auctions_per_epoch must be positive")
        if self.num_epochs <= 0:
            raise ConfigurationError("num_epochs must be positive")
        if self.budget_ratio <= 0:
            raise ConfigurationError(f"budget_ratio must be > 0, got {self.budget_ratio}")
        if self.budget <= 0:
            raise ConfigurationError("derived episode budget rounds down to 0")

    @property
    def budget(self) -> int:
        return episode_budget(self.cpm_train, self.auctions_per_epoch, self.budget_ratio)


@dataclass(frozen=True)
class AuctionOutcome:
    bids: tuple[int, ...]
    winner: int | None
    market_price: int

    def feedback_view(self, agent: int) -> tuple[bool, int, int | None]:
        """(won, own bid, market price or None): what ``agent`` is allowed to see."""
        won = self.winner == agent
        return won, self.bids[agent], self.market_price if won else None


def clear_auction(bids: Sequence[int], rng: np.random.Generator) -> AuctionOutcome:
    """Second-price rule. Ties at the top are broken uniformly with ``rng``."""
    if len(bids) == 0:
        raise ProtocolError("clear_auction called with no bids")
    b = tuple(int(x) for x in bids)
    if min(b) < 0:
        raise ProtocolError(f"negative bid in {b}")
    top = max(b)
    if top == 0:
        return AuctionOutcome(b, None, 0)
    leaders = [i for i, x in enumerate(b) if x == top]
    winner = leaders[0] if len(leaders) == 1 else leaders[int(rng.integers(len(leaders)))]
    price = max((x for i, x in enumerate(b) if i != winner), default=0)
    return AuctionOutcome(b, winner, price)


@dataclass
class EpochMetrics:
    epoch: int
    budget: int
    impressions: np.ndarray
    clicks: np.ndarray
    spend: np.ndarray
    reward: np.ndarray
    price_histogram: np.ndarray
    auctions: int = 0
    partial: bool = False

    @classmethod
    def empty(cls, epoch: int, n_agents: int, budget: int, b_max: int) -> "EpochMetrics":
        return cls(epoch, budget, np.zeros(n_agents, dtype=np.int64), np.zeros(n_agents, dtype=np.int64),
                   np.zeros(n_agents, dtype=np.int64), np.zeros(n_agents), np.zeros(b_max + 1, dtype=np.int64))

    @property
    def mean_price(self) -> float:
        n = self.price_histogram.sum()
        if n == 0:
            return 0.0
        return float(np.dot(np.arange(len(self.price_histogram)), self.price_histogram) / n)

    @property
    def shares(self) -> np.ndarray:
        total = self.impressions.sum()
        if total == 0:
            return np.zeros(len(self.impressions))
        return self.impressions / total


# ---------------------------------------------------------------- simulation bid log


@dataclass
class SimulationLog:
    """Columnar per-auction record: who bid what, who won, at which price."""
    n_agents: int
    auction_id: list[int] = field(default_factory=list)
    epoch: list[int] = field(default_factory=list)
    winner: list[int] = field(default_factory=list)
    market_price: list[int] = field(default_factory=list)
    bids: list[tuple[int, ...]] = field(default_factory=list)
    pctr: list[float] = field(default_factory=list)
    features: list[tuple[int, ...]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.auction_id)

    def append(self, auction_id: int, epoch: int, outcome: AuctionOutcome, pctr: float,
               features: tuple[int, ...]) -> None:
        self.auction_id.append(auction_id)
        self.epoch.append(epoch)
        self.winner.append(-1 if outcome.winner is None else outcome.winner)
        self.market_price.append(outcome.market_price)
        self.bids.append(outcome.bids)
        self.pctr.append(pctr)
        self.features.append(features)

    def bid_matrix(self) -> np.ndarray:
        return np.array(self.bids, dtype=np.int64).reshape(len(self), self.n_agents)


def write_simulation_log(path, sim_log: SimulationLog) -> None:
    """Text format, one auction per line, space separated::

        # mfbid-simlog v1 agents=3
        17 0 2 41 12 41 55 0.0123 0,9,14

    Columns: auction_id epoch winner_id market_price bid_1..bid_n pctr features.
    ``winner_id`` is -1 when nobody bid above zero; features are comma separated.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# mfbid-simlog v1 agents={sim_log.n_agents}\n")
        for i in range(len(sim_log)):
            bids = " ".join(str(b) for b in sim_log.bids[i])
            feats = ",".join(str(f) for f in sim_log.features[i])
            fh.write(f"{sim_log.auction_id[i]} {sim_log.epoch[i]} {sim_log.winner[i]} "
                     f"{sim_log.market_price[i]} {bids} {sim_log.pctr[i]!r} {feats}\n")


def read_simulation_log(path) -> SimulationLog:
    path = Path(path)
    if not path.exists():
        raise InputError(f"simulation log not found: {path}")
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if header[:3] != ["#", "mfbid-simlog", "v1"] or not header[3].startswith("agents="):
            raise InputError(f"{path}: not a simulation log (bad header)")
        n = int(header[3].split("=", 1)[1])
        out = SimulationLog(n)
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if len(parts) != 6 + n:
                raise InputError(f"{path}:{lineno}: expected {6 + n} columns, got {len(parts)}")
            out.auction_id.append(int(parts[0]))
            out.epoch.append(int(parts[1]))
            out.winner.append(int(parts[2]))
            out.market_price.append(int(parts[3]))
            out.bids.append(tuple(int(x) for x in parts[4:4 + n]))
            out.pctr.append(float(parts[4 + n]))
            out.features.append(tuple(int(x) for x in parts[5 + n].split(",")) if parts[5 + n] else ())
    return out


METRICS_COLUMNS = ("epoch", "agent", "impressions", "clicks", "spend", "reward", "budget",
                   "auctions", "mean_price", "partial")


def metrics_csv(series: Sequence[EpochMetrics], names: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_COLUMNS)
    for m in series:
        for i, name in enumerate(names):
            w.writerow([m.epoch, name, int(m.impressions[i]), int(m.clicks[i]), int(m.spend[i]),
                        f"{m.reward[i]:.6f}", m.budget, m.auctions, f"{m.mean_price:.4f}", int(m.partial)])
    return buf.getvalue()


def write_metrics_csv(path, series: Sequence[EpochMetrics], names: Sequence[str]) -> None:
    Path(path).write_text(metrics_csv(series, names), encoding="utf-8")


# ---------------------------------------------------------------- environment


class AuctionEnv:
    """Drives a fixed roster through epochs of ``K`` auctions.

    Every agent sees the same pCTR for a request; agents with no budget left
    are not asked and bid 0.
    """

    def __init__(self, agents: Sequence, episode: EpisodeConfig, pctr_fn: Callable[[BidRequest], float],
                 rng: np.random.Generator, b_max: int, sim_log: SimulationLog | None = None):
        if not agents:
            raise ConfigurationError("the roster is empty")
        self.agents = list(agents)
        self.episode = episode
        self.pctr_fn = pctr_fn
        self.rng = rng
        self.b_max = b_max
        self.sim_log = sim_log
        self.epoch = 0
        self.budgets = np.zeros(len(self.agents), dtype=np.int64)
        self._metrics: EpochMetrics | None = None
        self._t = 0

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.agents]

    def begin_epoch(self) -> None:
        b = self.episode.budget
        self.budgets[:] = b
        self._t = 0
        self._metrics = EpochMetrics.empty(self.epoch, len(self.agents), b, self.b_max)
        for a in self.agents:
            a.begin_epoch(b)

    def step(self, request: BidRequest) -> AuctionOutcome:
        if self._metrics is None:
            raise ProtocolError("step called outside an epoch")
        pctr = float(self.pctr_fn(request))
        active = self.budgets > 0
        bids = []
        for i, agent in enumerate(self.agents):
            if not active[i]:
                bids.append(0)
                continue
            b = int(agent.bid(request, pctr, int(self.budgets[i])))
            cap = min(int(self.budgets[i]), self.b_max)
            if b > cap or b < 0:
                log.warning("%s bid %d with budget %d (b_max %d); re-clipped", agent.name, b,
                            self.budgets[i], self.b_max)
                b = min(max(b, 0), cap)
            bids.append(b)
        outcome = clear_auction(bids, self.rng)
        m = self._metrics
        self._t += 1
        last = self._t >= self.episode.auctions_per_epoch
        if outcome.winner is not None:
            w = outcome.winner
            self.budgets[w] -= outcome.market_price
            m.impressions[w] += 1
            m.clicks[w] += int(request.click_label or 0)
            m.spend[w] += outcome.market_price
            m.reward[w] += pctr
            m.price_histogram[outcome.market_price] += 1
        m.auctions += 1
        for i, agent in enumerate(self.agents):
            if not active[i]:
                continue
            won, own, price = outcome.feedback_view(i)
            agent.observe(AgentFeedback(won, own, price, pctr if won else 0.0, int(self.budgets[i]),
                                        bool(last or self.budgets[i] <= 0)))
        if self.sim_log is not None:
            self.sim_log.append(request.auction_id, self.epoch, outcome, pctr, request.features)
        return outcome

    def end_epoch(self, partial: bool = False) -> EpochMetrics:
        m = self._metrics
        m.partial = partial
        for a in self.agents:
            a.end_epoch()
        self._metrics = None
        self.epoch += 1
        return m

    def run_epoch(self, requests: Iterator[BidRequest]) -> EpochMetrics:
        self.begin_epoch()
        k = self.episode.auctions_per_epoch
        for _ in range(k):
            req = next(requests, None)
            if req is None:
                log.warning("request stream ran out after %d of %d auctions in epoch %d",
                            self._t, k, self.epoch)
                return self.end_epoch(partial=True)
            self.step(req)
        return self.end_epoch()


def run_epochs(env: AuctionEnv, requests: Iterator[BidRequest], n_epochs: int,
               on_epoch: Callable[[EpochMetrics], None] | None = None) -> list[EpochMetrics]:
    out = []
    for _ in range(n_epochs):
        m = env.run_epoch(requests)
        out.append(m)
        if on_epoch is not None:
            on_epoch(m)
        if m.partial:
            break
    return out
