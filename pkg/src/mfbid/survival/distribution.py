"""Discrete market-price distributions parameterized by per-bucket hazards.

Prices are integer buckets ``1..b_max``; array index ``j - 1`` holds bucket ``j``.
The survival ``S(a) = prod_{j<a} (1 - h_j)`` is the probability that the
market price is at least ``a`` (a bid of ``a`` loses, ties included).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mfbid.errors import ConfigurationError

HAZARD_FLOOR = 1e-6
HAZARD_CEIL = 1.0 - 1e-6


@dataclass(frozen=True)
class PriceSpace:
    b_max: int = 300

    def __post_init__(self):
        if int(self.b_max) != self.b_max or self.b_max < 2:
            raise ConfigurationError(f"b_max must be an integer >= 2, got {self.b_max}")


def clip_hazards(h: np.ndarray) -> np.ndarray:
    return np.clip(h, HAZARD_FLOOR, HAZARD_CEIL)


def pdf_from_hazards(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``p_j = h_j * prod_{k<j}(1 - h_k)`` over the last axis; also returns the residual mass."""
    h = np.asarray(h, dtype=np.float64)
    surv = np.cumprod(1.0 - h, axis=-1)
    before = np.concatenate([np.ones(h.shape[:-1] + (1,)), surv[..., :-1]], axis=-1)
    return h * before, surv[..., -1]


@dataclass
class MarketDistribution:
    hazards: np.ndarray
    pdf: np.ndarray
    residual_mass: float

    @classmethod
    def from_hazards(cls, hazards) -> "MarketDistribution":
        h = np.asarray(hazards, dtype=np.float64)
        if h.ndim != 1 or h.size < 1:
            raise ValueError("hazards must be a non-empty 1-D sequence")
        if np.any(h < 0) or np.any(h > 1):
            raise ValueError("hazards must lie in [0, 1]")
        pdf, residual = pdf_from_hazards(h)
        return cls(h, pdf, float(residual))

    @classmethod
    def from_pdf(cls, pdf) -> "MarketDistribution":
        """Invert Eq. p -> h; any mass missing from ``pdf`` becomes residual mass."""
        p = np.asarray(pdf, dtype=np.float64)
        at_risk = 1.0 - np.concatenate([[0.0], np.cumsum(p)[:-1]])
        with np.errstate(divide="ignore", invalid="ignore"):
            h = np.where(at_risk > 1e-15, p / at_risk, 0.0)
        return cls.from_hazards(np.clip(h, 0.0, 1.0))

    @classmethod
    def uniform(cls, b_max: int) -> "MarketDistribution":
        return cls.from_pdf(np.full(b_max, 1.0 / b_max))

    @property
    def b_max(self) -> int:
        return int(self.hazards.size)

    def survival(self, price: int) -> float:
        """P(market >= price) for ``price`` in 1..b_max+1."""
        return float(np.prod(1.0 - self.hazards[: price - 1]))

    def win_probability(self, bid: int) -> float:
        """P(market < bid) = sum of pdf over buckets strictly below ``bid``."""
        return float(self.pdf[: max(bid - 1, 0)].sum())


def loss_observed(dist: MarketDistribution, z: int) -> float:
    """``-[log h_z + sum_{j<z} log(1 - h_j)]`` with clipped hazards."""
    h = clip_hazards(dist.hazards)
    return float(-(np.log(h[z - 1]) + np.log1p(-h[: z - 1]).sum()))


def loss_censored(dist: MarketDistribution, own_bid: int) -> float:
    """``-sum_{j<a} log(1 - h_j)``: negative log of losing with bid ``a``."""
    h = clip_hazards(dist.hazards)
    return float(-np.log1p(-h[: own_bid - 1]).sum())


def loss_win(dist: MarketDistribution, own_bid: int) -> float:
    """``-log[1 - prod_{j<a}(1 - h_j)]``: negative log of winning with bid ``a``."""
    h = clip_hazards(dist.hazards)
    log_s = np.log1p(-h[: own_bid - 1]).sum()
    return float(-np.log(max(-np.expm1(log_s), HAZARD_FLOOR)))


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """Half the L1 distance between two (possibly sub-normalized) mass vectors."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    # residual mass beyond the grid is its own outcome
    rp, rq = max(1.0 - p.sum(), 0.0), max(1.0 - q.sum(), 0.0)
    return float(min(1.0, 0.5 * (np.abs(p - q).sum() + abs(rp - rq))))
