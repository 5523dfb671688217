"""INI run manifests: one file names the market, the roster and every knob.

Example::

    [run]
    seed = 7
    output_dir = demo
    b_max = 100

    [market]
    source = synthetic
    n_requests = 20000
    noise_cardinalities = 4, 4

    [segment.cheap]
    ctr = 0.05
    prices = 8:1.0

    [episode]
    auctions_per_epoch = 1000
    budget_ratio = 0.125
    num_epochs = 50

    [ddpg]
    hidden = 64, 64

    [agent.learner]
    kind = ddpg-om

    [agent.rival]
    kind = linear
    base_bid = 30
    reference_ctr = 0.2

Values given with ``--set section.key=value`` replace file values; a relative
``output_dir`` is resolved under ``$MFBID_RUN_ROOT`` (default: the working
directory).
"""
from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from mfbid.agents.ddpg import DdpgConfig
from mfbid.agents.linear import LinearBidderConfig
from mfbid.data import LogSchema, Segment, SyntheticMarketSpec
from mfbid.env import EpisodeConfig
from mfbid.errors import ConfigurationError
from mfbid.harness import AgentSpec, ScenarioConfig
from mfbid.nn.optim import OptimizerConfig
from mfbid.survival.dasa import OpponentTrainConfig

RUN_ROOT_ENV = "MFBID_RUN_ROOT"

_RUN_KEYS = {"seed": int, "output_dir": str, "b_max": int}
_MARKET_KEYS = {"source": str, "n_requests": int, "noise_cardinalities": "ints", "path": str,
                "train_fraction": float, "auction_id_column": str, "click_column": str,
                "price_column": str, "features_column": str, "categorical": "strs",
                "dimension": int}
_EPISODE_KEYS = {"auctions_per_epoch": int, "budget_ratio": float, "num_epochs": int,
                 "cpm_train": float}
_CTR_KEYS = {"alpha": float, "beta": float, "l1": float, "l2": float, "dimension": int, "epochs": int}
_HARNESS_KEYS = {"convergence_band": float, "convergence_window": int, "test_epochs": int,
                 "uniform_market": bool}
_OPPONENT_KEYS = {"num_features": int, "alpha": float, "embedding_dim": int, "model_width": int,
                  "ff_width": int, "epochs": int, "batch_size": int, "learning_rate": float,
                  "decay_factor": float}
_LINEAR_KEYS = {"base_bid": float, "reference_ctr": float, "pctr_noise_sigma": float}


def _ddpg_keys() -> dict:
    out = {}
    for f in dataclasses.fields(DdpgConfig):
        if f.name in ("b_max", "seed"):
            continue
        default = f.default
        out[f.name] = "ints" if isinstance(default, tuple) else type(default)
    return out


_DDPG_KEYS = _ddpg_keys()


def _convert(raw: str, kind, where: str):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "ints":
            return tuple(int(x) for x in raw.replace(",", " ").split())
        if kind == "strs":
            return [x.strip() for x in raw.split(",") if x.strip()]
        return kind(raw)
    except ValueError:
        raise ConfigurationError(f"{where}: cannot read {raw!r} as {getattr(kind, '__name__', kind)}") from None


def _section(cp: configparser.ConfigParser, name: str, keys: dict, required: bool = False) -> dict:
    if not cp.has_section(name):
        if required:
            raise ConfigurationError(f"manifest has no [{name}] section")
        return {}
    out = {}
    for key, raw in cp.items(name):
        if key not in keys:
            raise ConfigurationError(f"[{name}] unknown key {key!r}")
        out[key] = _convert(raw, keys[key], f"[{name}] {key}")
    return out


def _parse_prices(raw: str, where: str) -> dict[int, float]:
    prices: dict[int, float] = {}
    for item in raw.replace(";", ",").split(","):
        if not item.strip():
            continue
        try:
            price, prob = item.split(":")
            prices[int(price)] = prices.get(int(price), 0.0) + float(prob)
        except ValueError:
            raise ConfigurationError(f"{where}: expected price:probability pairs, got {item!r}") from None
    return prices


@dataclass
class Manifest:
    seed: int
    output_dir: Path
    b_max: int
    market: dict
    segments: list[Segment]
    episode: dict
    ctr: dict
    opponent: dict
    ddpg: dict
    agents: list[tuple[str, str, dict]]
    harness: dict = field(default_factory=dict)

    # ------------------------------------------------------------ builders

    @property
    def train_fraction(self) -> float:
        return self.market.get("train_fraction", 0.8)

    def synthetic_spec(self) -> SyntheticMarketSpec:
        if self.market.get("source", "synthetic") != "synthetic":
            raise ConfigurationError("market source is not synthetic")
        if not self.segments:
            raise ConfigurationError("a synthetic market needs at least one [segment.*] section")
        return SyntheticMarketSpec(
            n_requests=self.market.get("n_requests", 10_000), b_max=self.b_max, segments=self.segments,
            noise_cardinalities=list(self.market.get("noise_cardinalities", (4, 4))), seed=self.seed)

    def log_schema(self) -> LogSchema:
        m = self.market
        return LogSchema(auction_id=m.get("auction_id_column", "auction_id"),
                         click=m.get("click_column", "click"),
                         price=m.get("price_column", "market_price"),
                         features=m.get("features_column", "features"),
                         categorical=m.get("categorical", []),
                         dimension=m.get("dimension", 2 ** 18))

    def opponent_config(self, num_features: int | None = None) -> OpponentTrainConfig:
        o = dict(self.opponent)
        opt = OptimizerConfig(learning_rate=o.pop("learning_rate", 3e-3),
                              decay_factor=o.pop("decay_factor", 0.95))
        if num_features is not None and "num_features" not in o:
            o["num_features"] = num_features
        return OpponentTrainConfig(b_max=self.b_max, optimizer=opt, seed=self.seed, **o)

    def scenario(self, cpm_train: float, num_features: int | None = None) -> ScenarioConfig:
        ep = dict(self.episode)
        cpm = ep.pop("cpm_train", cpm_train)
        episode = EpisodeConfig(cpm_train=cpm, seed=self.seed, **ep)
        roster = []
        for name, kind, values in self.agents:
            values = dict(values)
            model_path = values.pop("opponent_model", None)
            if kind == "linear":
                missing = {"base_bid", "reference_ctr"} - values.keys()
                if missing:
                    raise ConfigurationError(f"[agent.{name}] linear agents need {sorted(missing)}")
                roster.append(AgentSpec(name, kind, linear=LinearBidderConfig(**values)))
            else:
                cfg = DdpgConfig(b_max=self.b_max, **{**self.ddpg, **values})
                roster.append(AgentSpec(name, kind, ddpg=cfg, opponent_model=model_path))
        ctr = dict(self.ctr)
        ctr_epochs = ctr.pop("epochs", 1)
        return ScenarioConfig(roster=roster, episode=episode, b_max=self.b_max,
                              train_fraction=self.train_fraction, ctr_epochs=ctr_epochs, ftrl=ctr,
                              opponent=self.opponent_config(num_features), **self.harness)


def apply_overrides(cp: configparser.ConfigParser, overrides: Sequence[str]) -> None:
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"--set expects section.key=value, got {item!r}")
        target, value = item.split("=", 1)
        if "." not in target:
            raise ConfigurationError(f"--set expects section.key=value, got {item!r}")
        section, key = target.rsplit(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, value)


def parse_manifest(text: str, overrides: Sequence[str] = (), seed: int | None = None,
                   base_dir: Path | None = None) -> Manifest:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"manifest syntax: {str(exc).splitlines()[0]}") from None
    apply_overrides(cp, overrides)

    run = _section(cp, "run", _RUN_KEYS, required=True)
    if seed is not None:
        run["seed"] = seed
    if "b_max" not in run:
        raise ConfigurationError("[run] b_max is required")
    root = Path(os.environ.get(RUN_ROOT_ENV, base_dir or "."))
    out = Path(run.get("output_dir", "run"))
    output_dir = out if out.is_absolute() else root / out

    market = _section(cp, "market", _MARKET_KEYS)
    if market.get("source", "synthetic") not in ("synthetic", "tsv"):
        raise ConfigurationError(f"[market] source must be synthetic or tsv, got {market['source']!r}")
    segments = []
    agents = []
    for name in cp.sections():
        if name.startswith("segment."):
            items = dict(cp.items(name))
            unknown = items.keys() - {"ctr", "weight", "prices"}
            if unknown:
                raise ConfigurationError(f"[{name}] unknown keys {sorted(unknown)}")
            if "prices" not in items or "ctr" not in items:
                raise ConfigurationError(f"[{name}] needs prices and ctr")
            segments.append(Segment(_parse_prices(items["prices"], f"[{name}] prices"),
                                    _convert(items["ctr"], float, f"[{name}] ctr"),
                                    _convert(items.get("weight", "1"), float, f"[{name}] weight")))
        elif name.startswith("agent."):
            agent = name[len("agent."):]
            items = dict(cp.items(name))
            kind = items.pop("kind", None)
            if kind not in ("linear", "ddpg", "ddpg-om"):
                raise ConfigurationError(f"[{name}] kind must be linear, ddpg or ddpg-om")
            keys = dict(_LINEAR_KEYS) if kind == "linear" else dict(_DDPG_KEYS)
            keys["opponent_model"] = str
            values = {}
            for k, raw in items.items():
                if k not in keys:
                    raise ConfigurationError(f"[{name}] unknown key {k!r}")
                values[k] = _convert(raw, keys[k], f"[{name}] {k}")
            agents.append((agent, kind, values))
        elif name not in ("run", "market", "episode", "ctr", "opponent", "ddpg", "harness"):
            raise ConfigurationError(f"unknown manifest section [{name}]")
    if not agents:
        raise ConfigurationError("manifest declares no [agent.*] sections")

    return Manifest(seed=int(run.get("seed", 0)), output_dir=output_dir, b_max=run["b_max"],
                    market=market, segments=segments,
                    episode=_section(cp, "episode", _EPISODE_KEYS),
                    ctr=_section(cp, "ctr", _CTR_KEYS),
                    opponent=_section(cp, "opponent", _OPPONENT_KEYS),
                    ddpg=_section(cp, "ddpg", _DDPG_KEYS),
                    agents=agents,
                    harness=_section(cp, "harness", _HARNESS_KEYS))


def load_manifest(path, overrides: Sequence[str] = (), seed: int | None = None) -> Manifest:
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"manifest not found: {p}")
    return parse_manifest(p.read_text(encoding="utf-8"), overrides, seed)
