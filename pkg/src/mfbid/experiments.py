"""Ready-made synthetic scenarios for the comparative experiments.

``single_agent_gain`` pits one learner against two noisy linear bidders and
reports clicks won with and without an opponent model. ``multi_agent_convergence``
runs three identical learners and reports how fast impression shares settle.
Both follow the full pipeline: log simulation, offline opponent fitting, replay.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mfbid.agents.ddpg import DdpgConfig
from mfbid.agents.linear import LinearBidderConfig
from mfbid.data import Segment, SyntheticMarketSpec, compute_cpm_train, generate_synthetic, train_test_split
from mfbid.env import EpisodeConfig, EpochMetrics
from mfbid.harness import (
    AgentSpec,
    ConvergenceReport,
    MfeDiagnostic,
    ScenarioConfig,
    fit_ctr,
    mfe_check,
    run_phase1,
    run_replay,
    train_models,
)
from mfbid.nn.optim import OptimizerConfig
from mfbid.survival.dasa import OpponentTrainConfig

GAIN_SEGMENTS = (
    Segment({8: 1.0}, 0.05),
    Segment({15: 1.0}, 0.10),
    Segment({30: 1.0}, 0.20),
    Segment({60: 1.0}, 0.40),
)


def synthetic_market(seed: int, b_max: int = 100, n_requests: int = 50_000,
                     segments=GAIN_SEGMENTS) -> SyntheticMarketSpec:
    return SyntheticMarketSpec(n_requests, b_max, list(segments), [4, 4], seed=seed)


def default_learner(b_max: int = 100, **overrides) -> DdpgConfig:
    """Learner settings used by the packaged experiments (more updates than the defaults)."""
    base = dict(b_max=b_max, hidden=(64, 64), update_period=10, updates_per_period=1,
                actor_lr=1e-3, critic_lr=1e-3, ctr_scale=0.4)
    base.update(overrides)
    return DdpgConfig(**base)


def default_opponent(spec: SyntheticMarketSpec) -> OpponentTrainConfig:
    return OpponentTrainConfig(b_max=spec.b_max, num_features=spec.num_features, epochs=3, batch_size=256,
                               optimizer=OptimizerConfig(learning_rate=3e-3, decay_factor=0.95))


def total_clicks(series: list[EpochMetrics], agent: int) -> int:
    return int(sum(int(m.clicks[agent]) for m in series))


@dataclass
class GainResult:
    seed: int
    budget: int
    plain_clicks: int
    om_clicks: int
    plain_test_clicks: int
    om_test_clicks: int
    plain_series: list[EpochMetrics]
    om_series: list[EpochMetrics]


def gain_scenario(seed: int, c0: float = 0.125, epochs: int = 300, b_max: int = 100,
                  learner: DdpgConfig | None = None, rival_sigma: float = 0.05, test_epochs: int = 10,
                  n_requests: int = 50_000):
    spec = synthetic_market(seed, b_max, n_requests)
    requests, _ = generate_synthetic(spec)
    train, test = train_test_split(requests)
    rival = LinearBidderConfig(base_bid=30, reference_ctr=0.2, pctr_noise_sigma=rival_sigma)
    roster = [AgentSpec("learner", "ddpg-om", ddpg=learner or default_learner(b_max)),
              AgentSpec("rival1", "linear", linear=rival),
              AgentSpec("rival2", "linear", linear=rival)]
    episode = EpisodeConfig(1000, c0, compute_cpm_train(train), epochs, seed)
    scenario = ScenarioConfig(roster, episode, b_max=b_max, test_epochs=test_epochs,
                              opponent=default_opponent(spec))
    return scenario, train, test


def single_agent_gain(seed: int, **kw) -> GainResult:
    """Plain DDPG is the phase-1 learner; DDPG-OM restarts with the model fitted on its log."""
    scenario, train, test = gain_scenario(seed, **kw)
    ctr = fit_ctr(scenario, train)
    phase1 = run_phase1(scenario, train, ctr)
    models = train_models(scenario, phase1.sim_log, phase1.names)
    plain = run_replay(scenario, train, test, ctr, None, with_models=False)
    om = run_replay(scenario, train, test, ctr, models)
    return GainResult(seed, scenario.episode.budget, total_clicks(plain.train_metrics, 0),
                      total_clicks(om.train_metrics, 0), total_clicks(plain.test_metrics, 0),
                      total_clicks(om.test_metrics, 0), plain.train_metrics, om.train_metrics)


@dataclass
class ConvergenceResult:
    seed: int
    plain: ConvergenceReport
    om: ConvergenceReport
    mfe_first: MfeDiagnostic
    mfe_final: MfeDiagnostic


def convergence_scenario(seed: int, epochs: int = 200, c0: float = 0.25, b_max: int = 100,
                         learner: DdpgConfig | None = None, n_requests: int = 50_000,
                         band: float = 0.05, window: int = 20):
    spec = synthetic_market(seed, b_max, n_requests)
    requests, _ = generate_synthetic(spec)
    train, test = train_test_split(requests)
    cfg = learner or default_learner(b_max)
    roster = [AgentSpec(f"agent{i}", "ddpg-om", ddpg=cfg) for i in range(3)]
    episode = EpisodeConfig(1000, c0, compute_cpm_train(train), epochs, seed)
    scenario = ScenarioConfig(roster, episode, b_max=b_max, opponent=default_opponent(spec),
                              convergence_band=band, convergence_window=window)
    return scenario, train, test


def multi_agent_convergence(seed: int, **kw) -> ConvergenceResult:
    scenario, train, test = convergence_scenario(seed, **kw)
    ctr = fit_ctr(scenario, train)
    phase1 = run_phase1(scenario, train, ctr)
    models = train_models(scenario, phase1.sim_log, phase1.names)
    plain = run_replay(scenario, train, test, ctr, None, with_models=False)
    om = run_replay(scenario, train, test, ctr, models)
    rows = sorted(set(r.features for r in train))
    w = scenario.convergence_window
    model_list = [models[n] for n in om.names]
    return ConvergenceResult(seed, plain.train_report, om.train_report,
                             mfe_check(model_list, rows, om.train_metrics[:w], scenario.b_max),
                             mfe_check(model_list, rows, om.train_metrics[-w:], scenario.b_max))


def median(values) -> float:
    return float(np.median(np.asarray(values, dtype=float)))
