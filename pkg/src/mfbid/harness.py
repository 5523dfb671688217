"""Experiment pipeline: simulate a log, fit opponent models offline, replay online.

Phase 1 runs the roster without opponent models and records every bid. Each
``ddpg-om`` agent then gets a survival model fitted on its own wins and losses
from that log, and phase 3 restarts fresh agents that consult those models.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Sequence

import numpy as np

from mfbid.agents.ddpg import DdpgAgent, DdpgConfig
from mfbid.agents.linear import LinearBidder, LinearBidderConfig
from mfbid.ctr import FtrlState, predict_ctr, train_ctr
from mfbid.data import BidRequest, rng_stream
from mfbid.env import AuctionEnv, EpisodeConfig, EpochMetrics, SimulationLog, run_epochs
from mfbid.errors import ConfigurationError
from mfbid.survival.dasa import DasaModel, OpponentTrainConfig, train_opponent
from mfbid.survival.distribution import total_variation
from mfbid.survival.models import ConstantMarketModel
from mfbid.survival.samples import SurvivalSample

log = logging.getLogger(__name__)

AGENT_KINDS = ("linear", "ddpg", "ddpg-om")


@dataclass
class AgentSpec:
    name: str
    kind: str
    linear: LinearBidderConfig | None = None
    ddpg: DdpgConfig | None = None
    opponent_model: str | None = None

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ConfigurationError(f"agent {self.name}: unknown kind {self.kind!r}")
        if self.kind == "linear" and self.linear is None:
            raise ConfigurationError(f"agent {self.name}: linear agents need a linear config")
        if self.kind != "linear" and self.ddpg is None:
            self.ddpg = DdpgConfig()


@dataclass
class ScenarioConfig:
    roster: list[AgentSpec]
    episode: EpisodeConfig
    b_max: int = 300
    train_fraction: float = 0.8
    test_epochs: int = 0
    ctr_epochs: int = 1
    ftrl: dict = field(default_factory=dict)
    opponent: OpponentTrainConfig | None = None
    uniform_market: bool = False
    convergence_band: float = 0.05
    convergence_window: int = 20

    def __post_init__(self):
        names = [a.name for a in self.roster]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"duplicate agent names in roster: {names}")
        if len(self.roster) < 2:
            raise ConfigurationError("an auction needs at least two agents")
        for a in self.roster:
            if a.ddpg is not None and a.ddpg.b_max != self.b_max:
                raise ConfigurationError(f"agent {a.name}: b_max {a.ddpg.b_max} != scenario b_max {self.b_max}")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ConfigurationError("train_fraction must lie in (0, 1]")

    @property
    def seed(self) -> int:
        return self.episode.seed


# ---------------------------------------------------------------- pieces


class CtrPredictor:
    """FTRL model memoized per feature tuple (the model is frozen during simulation)."""

    def __init__(self, state: FtrlState):
        self.state = state
        self._cache: dict[tuple[int, ...], float] = {}

    def __call__(self, request: BidRequest) -> float:
        p = self._cache.get(request.features)
        if p is None:
            p = predict_ctr(request.features, self.state)
            self._cache[request.features] = p
        return p


def fit_ctr(scenario: ScenarioConfig, train: Sequence[BidRequest]) -> CtrPredictor:
    labelled = [(r.features, r.click_label) for r in train if r.click_label is not None]
    if not labelled:
        raise ConfigurationError("no click labels in the training stream")
    dim = scenario.ftrl.get("dimension")
    if dim is None:
        dim = max(max(f) for f, _ in labelled if f) + 1
    state = FtrlState(**{**scenario.ftrl, "dimension": int(dim)})
    train_ctr(labelled, state, epochs=scenario.ctr_epochs)
    return CtrPredictor(state)


def cycle_requests(requests: Sequence[BidRequest]) -> Iterator[BidRequest]:
    """Endless pass over the stream in its original order."""
    if not requests:
        raise ConfigurationError("empty request stream")
    return itertools.cycle(requests)


def build_agents(scenario: ScenarioConfig, models: dict | None = None,
                 with_models: bool = True) -> list:
    """Fresh roster. ``ddpg-om`` agents get their model when ``with_models``."""
    models = models or {}
    seed = scenario.seed
    agents = []
    for spec in scenario.roster:
        rng = rng_stream(seed, f"agent/{spec.name}")
        if spec.kind == "linear":
            agents.append(LinearBidder(spec.name, spec.linear, scenario.b_max, rng))
            continue
        use_om = spec.kind == "ddpg-om" and with_models
        cfg = replace(spec.ddpg, use_opponent_model=use_om,
                      seed=int(rng_stream(seed, f"init/{spec.name}").integers(2 ** 31)))
        opponent = None
        if use_om:
            opponent = models.get(spec.name)
            if opponent is None:
                raise ConfigurationError(f"agent {spec.name}: no opponent model available for replay")
        agents.append(DdpgAgent(spec.name, cfg, opponent, rng))
    return agents


def simulate(scenario: ScenarioConfig, agents: list, requests: Iterator[BidRequest],
             pctr_fn: Callable[[BidRequest], float], n_epochs: int, stream: str = "env",
             record: bool = True) -> tuple[list[EpochMetrics], SimulationLog | None]:
    sim_log = SimulationLog(len(agents)) if record else None
    env = AuctionEnv(agents, scenario.episode, pctr_fn, rng_stream(scenario.seed, stream),
                     scenario.b_max, sim_log)
    metrics = run_epochs(env, requests, n_epochs)
    return metrics, sim_log


# ---------------------------------------------------------------- phases


@dataclass
class Phase1Result:
    metrics: list[EpochMetrics]
    sim_log: SimulationLog
    names: list[str]


def run_phase1(scenario: ScenarioConfig, train: Sequence[BidRequest],
               pctr_fn: Callable[[BidRequest], float]) -> Phase1Result:
    """Run the roster with no opponent models and log every bid."""
    agents = build_agents(scenario, with_models=False)
    metrics, sim_log = simulate(scenario, agents, cycle_requests(train), pctr_fn,
                                scenario.episode.num_epochs, stream="env/phase1")
    return Phase1Result(metrics, sim_log, [a.name for a in agents])


def extract_survival_dataset(sim_log: SimulationLog, agent: int, b_max: int) -> list[SurvivalSample]:
    """Wins become exact market prices; losses are censored at the agent's own bid.

    Prices and bids of 0 are lifted to bucket 1, the lowest bucket the models
    represent.
    """
    if len(sim_log) == 0:
        raise ConfigurationError("simulation log is empty")
    out = []
    for feats, winner, price, bids in zip(sim_log.features, sim_log.winner,
                                          sim_log.market_price, sim_log.bids):
        own = min(max(bids[agent], 1), b_max)
        if winner == agent:
            out.append(SurvivalSample(feats, min(max(price, 1), b_max), False, own))
        else:
            out.append(SurvivalSample(feats, own, True))
    return out


def opponent_config_for(scenario: ScenarioConfig, agent: str) -> OpponentTrainConfig:
    base = scenario.opponent or OpponentTrainConfig(b_max=scenario.b_max)
    return replace(base, b_max=scenario.b_max,
                   seed=int(rng_stream(scenario.seed, f"opponent/{agent}").integers(2 ** 31)))


def train_models(scenario: ScenarioConfig, sim_log: SimulationLog,
                 names: Sequence[str]) -> dict[str, object]:
    """One opponent model per ``ddpg-om`` agent, fitted on that agent's view of the log."""
    models: dict[str, object] = {}
    for i, spec in enumerate(scenario.roster):
        if spec.kind != "ddpg-om":
            continue
        if scenario.uniform_market:
            models[spec.name] = ConstantMarketModel.uniform(scenario.b_max)
            continue
        cfg = opponent_config_for(scenario, spec.name)
        samples = extract_survival_dataset(sim_log, i, scenario.b_max)
        log.info("training opponent model for %s on %d samples (%d censored)", spec.name,
                 len(samples), sum(s.censored for s in samples))
        models[spec.name] = train_opponent(samples, cfg)
    return models


def load_models(scenario: ScenarioConfig) -> dict[str, object]:
    models = {}
    for spec in scenario.roster:
        if spec.kind != "ddpg-om":
            continue
        if scenario.uniform_market:
            models[spec.name] = ConstantMarketModel.uniform(scenario.b_max)
        elif spec.opponent_model is None:
            raise ConfigurationError(f"agent {spec.name}: replay needs an opponent_model path")
        else:
            models[spec.name] = DasaModel.load(spec.opponent_model)
    return models


@dataclass
class ConvergenceReport:
    shares: np.ndarray
    convergence_epoch: int | None
    share_at_convergence: np.ndarray | None
    band: float
    window: int

    @property
    def converged(self) -> bool:
        return self.convergence_epoch is not None

    def final_shares(self, last: int | None = None) -> np.ndarray:
        last = self.window if last is None else last
        return self.shares[-last:].mean(axis=0)

    def to_text(self, names: Sequence[str]) -> str:
        lines = [f"band {self.band}", f"window {self.window}",
                 f"convergence_epoch {self.convergence_epoch if self.converged else 'not-converged'}"]
        final = self.final_shares()
        for i, n in enumerate(names):
            at = "-" if self.share_at_convergence is None else f"{self.share_at_convergence[i]:.4f}"
            lines.append(f"share {n} at_convergence {at} final {final[i]:.4f}")
        return "\n".join(lines) + "\n"


def impression_shares(series: Sequence[EpochMetrics]) -> np.ndarray:
    return np.array([m.shares for m in series])


def trailing_mean(shares: np.ndarray, window: int) -> np.ndarray:
    """Mean over the last ``window`` epochs up to and including each epoch (shorter at the start)."""
    csum = np.cumsum(np.vstack([np.zeros((1, shares.shape[1])), shares]), axis=0)
    ends = np.arange(1, len(shares) + 1)
    starts = np.maximum(ends - window, 0)
    return (csum[ends] - csum[starts]) / (ends - starts)[:, None]


def convergence_report(series: Sequence[EpochMetrics] | np.ndarray, band: float = 0.05,
                       window: int = 20) -> ConvergenceReport:
    """First epoch ``t`` such that in epochs ``t .. t+window-1`` every agent's share
    stays within ``band`` of its own trailing ``window``-epoch mean.
    """
    shares = np.asarray(series if isinstance(series, np.ndarray) else impression_shares(series), dtype=float)
    if len(shares) == 0:
        return ConvergenceReport(shares, None, None, band, window)
    ok = np.all(np.abs(shares - trailing_mean(shares, window)) <= band + 1e-12, axis=1)
    run = 0
    for u, good in enumerate(ok):
        run = run + 1 if good else 0
        if run == window:
            t = u - window + 1
            return ConvergenceReport(shares, t, shares[t:u + 1].mean(axis=0), band, window)
    return ConvergenceReport(shares, None, None, band, window)


@dataclass
class ReplayResult:
    names: list[str]
    train_metrics: list[EpochMetrics]
    test_metrics: list[EpochMetrics]
    train_report: ConvergenceReport
    test_report: ConvergenceReport | None
    sim_log: SimulationLog | None
    agents: list


def run_replay(scenario: ScenarioConfig, train: Sequence[BidRequest], test: Sequence[BidRequest],
               pctr_fn: Callable[[BidRequest], float], models: dict | None,
               with_models: bool = True, record: bool = False) -> ReplayResult:
    """Fresh agents learn online over the training stream, then keep going on the test stream."""
    agents = build_agents(scenario, models, with_models)
    tag = "om" if with_models else "plain"
    train_metrics, sim_log = simulate(scenario, agents, cycle_requests(train), pctr_fn,
                                      scenario.episode.num_epochs, stream=f"env/replay/{tag}",
                                      record=record)
    test_metrics: list[EpochMetrics] = []
    if scenario.test_epochs > 0 and test:
        test_metrics, _ = simulate(scenario, agents, cycle_requests(test), pctr_fn,
                                   scenario.test_epochs, stream=f"env/test/{tag}", record=False)
    band, window = scenario.convergence_band, scenario.convergence_window
    report = convergence_report(train_metrics, band, window)
    test_report = convergence_report(test_metrics, band, min(window, len(test_metrics))) if test_metrics else None
    return ReplayResult([a.name for a in agents], train_metrics, test_metrics, report, test_report,
                        sim_log, agents)


# ---------------------------------------------------------------- mean-field consistency


@dataclass
class MfeDiagnostic:
    distance: float
    model_pdf: np.ndarray
    empirical_pdf: np.ndarray


def clearing_price_pdf(series: Sequence[EpochMetrics], b_max: int) -> np.ndarray:
    """Histogram of clearing prices over the given epochs, on buckets 1..b_max.

    A price of 0 (a single positive bidder) is counted in bucket 1.
    """
    hist = np.sum([m.price_histogram for m in series], axis=0).astype(float)
    pdf = hist[1:b_max + 1].copy()
    pdf[0] += hist[0]
    total = pdf.sum()
    if total == 0:
        raise ConfigurationError("no cleared auctions in the selected epochs")
    return pdf / total


def mfe_check(models: Sequence, feature_rows: Sequence[Sequence[int]], series: Sequence[EpochMetrics],
              b_max: int) -> MfeDiagnostic:
    """TV distance between the models' averaged market pdf and the observed clearing prices."""
    if not models:
        raise ConfigurationError("mfe_check needs at least one opponent model")
    rows = list(feature_rows)
    model_pdf = np.mean([m.pdf_batch(rows).mean(axis=0) for m in models], axis=0)
    empirical = clearing_price_pdf(series, b_max)
    return MfeDiagnostic(total_variation(model_pdf, empirical), model_pdf, empirical)
