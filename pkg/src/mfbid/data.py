"""Bid requests: synthetic generation with known ground truth, TSV logs, CPM budgets.

Money is measured in integer price buckets everywhere. ``compute_cpm_train``
returns the cost per mille impressions (1000 x mean logged price), so the
episode budget ``CPM * 1e-3 * K * c0`` equals ``mean_price * K * c0`` buckets.
"""
from __future__ import annotations

import csv
import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from mfbid.errors import ConfigurationError, InputError
from mfbid.survival.samples import SurvivalSample

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BidRequest:
    auction_id: int
    features: tuple[int, ...]
    click_label: int | None = None
    logged_market_price: int | None = None


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent named sub-stream of a single run seed."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


def hash_feature(field_name: str, value: str, dimension: int) -> int:
    return zlib.crc32(f"{field_name}={value}".encode()) % dimension


# ---------------------------------------------------------------- synthetic markets


@dataclass
class Segment:
    prices: Mapping[int, float]
    ctr: float
    weight: float = 1.0


@dataclass
class SyntheticMarketSpec:
    n_requests: int
    b_max: int
    segments: list[Segment]
    noise_cardinalities: list[int] = field(default_factory=lambda: [4, 4])
    seed: int = 0

    def __post_init__(self):
        if not self.segments:
            raise ConfigurationError("at least one segment is required")
        for s in self.segments:
            total = sum(s.prices.values())
            if abs(total - 1.0) > 1e-9:
                raise ConfigurationError(f"segment price pdf sums to {total}, not 1")
            if any(not 1 <= p <= self.b_max for p in s.prices):
                raise ConfigurationError(f"segment prices must lie in 1..{self.b_max}")
            if not 0.0 <= s.ctr <= 1.0:
                raise ConfigurationError("segment ctr must lie in [0, 1]")

    @property
    def cardinalities(self) -> list[int]:
        return [len(self.segments), *self.noise_cardinalities]

    @property
    def num_features(self) -> int:
        return int(sum(self.cardinalities))

    def segment_pdf(self, k: int) -> np.ndarray:
        pdf = np.zeros(self.b_max)
        for price, prob in self.segments[k].prices.items():
            pdf[price - 1] += prob
        return pdf

    def weights(self) -> np.ndarray:
        w = np.array([s.weight for s in self.segments], dtype=float)
        return w / w.sum()

    def conditional_entropy(self) -> float:
        """H(price | features) in nats; the ANLP lower bound for any model."""
        h = 0.0
        for wk, k in zip(self.weights(), range(len(self.segments))):
            p = self.segment_pdf(k)
            p = p[p > 0]
            h -= wk * float(np.sum(p * np.log(p)))
        return h


@dataclass
class GroundTruth:
    spec: SyntheticMarketSpec
    segment: np.ndarray

    def ctr_of(self, i: int) -> float:
        return self.spec.segments[int(self.segment[i])].ctr


def generate_synthetic(spec: SyntheticMarketSpec) -> tuple[list[BidRequest], GroundTruth]:
    """Draw requests segment by segment; field 0 carries the segment, the rest is noise."""
    rng = rng_stream(spec.seed, "synth")
    n = spec.n_requests
    seg = rng.choice(len(spec.segments), size=n, p=spec.weights())
    offsets = np.concatenate([[0], np.cumsum(spec.cardinalities)[:-1]])
    cols = [seg]
    for card in spec.noise_cardinalities:
        cols.append(rng.integers(0, card, size=n))
    feats = np.stack(cols, axis=1) + offsets
    prices = np.empty(n, dtype=np.int64)
    clicks = np.empty(n, dtype=np.int64)
    for k, s in enumerate(spec.segments):
        idx = np.flatnonzero(seg == k)
        support = np.array(sorted(s.prices))
        probs = np.array([s.prices[p] for p in support])
        prices[idx] = rng.choice(support, size=idx.size, p=probs / probs.sum())
        clicks[idx] = rng.random(idx.size) < s.ctr
    requests = [BidRequest(i, tuple(int(f) for f in feats[i]), int(clicks[i]), int(prices[i]))
                for i in range(n)]
    return requests, GroundTruth(spec, seg)


def censor_requests(requests: Sequence[BidRequest], fraction: float, b_max: int,
                    rng: np.random.Generator) -> list[SurvivalSample]:
    """Turn priced requests into survival samples with a target censoring fraction.

    Censored rows lose with an own bid drawn uniformly from 1..z; uncensored rows
    win with an own bid drawn uniformly from z+1..b_max+1 (capped at b_max).
    """
    out = []
    for r in requests:
        z = r.logged_market_price
        if z is None:
            continue
        if rng.random() < fraction:
            out.append(SurvivalSample(r.features, int(rng.integers(1, z + 1)), True))
        else:
            bid = int(rng.integers(z + 1, b_max + 2)) if z < b_max else b_max
            out.append(SurvivalSample(r.features, z, False, min(bid, b_max)))
    return out


# ---------------------------------------------------------------- TSV bid logs


@dataclass
class LogSchema:
    """Column roles of a tab-separated request log with a header row.

    ``features`` names a column of comma-joined integer ids; ``categorical``
    lists raw columns hashed into ``dimension`` buckets instead.
    """
    auction_id: str = "auction_id"
    click: str | None = "click"
    price: str | None = "market_price"
    features: str | None = "features"
    categorical: list[str] = field(default_factory=list)
    dimension: int = 2 ** 18
    delimiter: str = "\t"
    max_malformed_fraction: float = 0.01


@dataclass
class ParseSummary:
    lines: int = 0
    malformed: int = 0


class BidLogReader:
    """Lazy iterator over a TSV log; malformed lines are skipped and counted.

    The malformed fraction is checked when the stream ends and raises if it
    exceeds the schema cap.
    """

    def __init__(self, path, schema: LogSchema | None = None):
        self.path = Path(path)
        self.schema = schema or LogSchema()
        self.summary = ParseSummary()
        if not self.path.exists():
            raise InputError(f"cannot read bid log {self.path}")

    def __iter__(self) -> Iterator[BidRequest]:
        s = self.schema
        with self.path.open(newline="") as fh:
            reader = csv.reader(fh, delimiter=s.delimiter)
            header = next(reader, None)
            if header is None:
                return
            col = {name: i for i, name in enumerate(header)}
            needed = [s.auction_id] + [c for c in (s.click, s.price, s.features) if c] + s.categorical
            missing = [c for c in needed if c not in col]
            if missing:
                raise InputError(f"{self.path}: schema columns missing from header: {missing}")
            for row in reader:
                if not row:
                    continue
                self.summary.lines += 1
                try:
                    yield self._parse(row, col)
                except (ValueError, IndexError):
                    self.summary.malformed += 1
        if self.summary.lines and (self.summary.malformed / self.summary.lines
                                   > s.max_malformed_fraction):
            raise InputError(f"{self.path}: {self.summary.malformed}/{self.summary.lines} "
                             f"malformed lines exceeds cap {s.max_malformed_fraction:.0%}")
        if self.summary.malformed:
            log.warning("%s: skipped %d malformed lines", self.path, self.summary.malformed)

    def _parse(self, row: list[str], col: dict[str, int]) -> BidRequest:
        s = self.schema
        feats: list[int] = []
        if s.features:
            raw = row[col[s.features]]
            feats.extend(int(f) for f in raw.split(",") if f)
        for name in s.categorical:
            feats.append(hash_feature(name, row[col[name]], s.dimension))
        if any(f < 0 or f >= s.dimension for f in feats):
            raise ValueError("feature id out of range")
        click = None
        if s.click and row[col[s.click]] != "":
            click = int(row[col[s.click]])
            if click not in (0, 1):
                raise ValueError("click label must be 0/1")
        price = None
        if s.price and row[col[s.price]] != "":
            price = int(row[col[s.price]])
            if price < 1:
                raise ValueError("market price must be >= 1")
        return BidRequest(int(row[col[s.auction_id]]), tuple(feats), click, price)


def parse_bid_log(path, schema: LogSchema | None = None) -> BidLogReader:
    return BidLogReader(path, schema)


def write_bid_log(path, requests: Iterable[BidRequest]) -> None:
    lines = ["auction_id\tclick\tmarket_price\tfeatures"]
    for r in requests:
        click = "" if r.click_label is None else str(r.click_label)
        price = "" if r.logged_market_price is None else str(r.logged_market_price)
        lines.append(f"{r.auction_id}\t{click}\t{price}\t{','.join(map(str, r.features))}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- budgets


def compute_cpm_train(requests: Iterable[BidRequest]) -> float:
    prices = [r.logged_market_price for r in requests if r.logged_market_price is not None]
    if not prices:
        raise InputError("no priced requests to compute CPM from")
    return 1000.0 * math.fsum(prices) / len(prices)


def episode_budget(cpm_train: float, auctions_per_epoch: int, c0: float) -> int:
    """``B = CPM_train * 1e-3 * K * c0`` rounded down to whole price buckets."""
    if c0 <= 0:
        raise ConfigurationError("budget ratio c0 must be > 0")
    # round before flooring so 70000 * 1e-3 * 1000 * 0.25 lands on 17500, not 17499
    return int(math.floor(round(cpm_train * 1e-3 * auctions_per_epoch * c0, 9)))


def train_test_split(requests: Sequence[BidRequest], train_fraction: float = 0.8):
    cut = int(len(requests) * train_fraction)
    return list(requests[:cut]), list(requests[cut:])
