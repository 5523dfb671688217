from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mfbid.agents.base import AgentFeedback
from mfbid.data import BidRequest
from mfbid.errors import ConfigurationError


@dataclass
class LinearBidderConfig:
    base_bid: float
    reference_ctr: float
    pctr_noise_sigma: float = 0.0

    def __post_init__(self):
        if self.base_bid <= 0:
            raise ConfigurationError("base_bid must be > 0")
        if not 0.0 < self.reference_ctr <= 1.0:
            raise ConfigurationError("reference_ctr must lie in (0, 1]")
        if self.pctr_noise_sigma < 0:
            raise ConfigurationError("pctr_noise_sigma must be >= 0")


def linear_bid(pctr: float, config: LinearBidderConfig, rng: np.random.Generator | None = None,
               budget_left: float = math.inf) -> float:
    """``b0 * (pctr + noise) / reference_ctr``, floored at 0 and capped at the budget."""
    noisy = pctr
    if config.pctr_noise_sigma > 0:
        noisy += rng.normal(0.0, config.pctr_noise_sigma)
    return min(max(config.base_bid * noisy / config.reference_ctr, 0.0), budget_left)


class LinearBidder:
    """Static bidder: bids proportionally to (noisy) pCTR and never learns."""

    def __init__(self, name: str, config: LinearBidderConfig, b_max: int,
                 rng: np.random.Generator):
        self.name = name
        self.config = config
        self.b_max = b_max
        self.rng = rng

    def begin_epoch(self, budget: int) -> None:
        pass

    def bid(self, request: BidRequest, pctr: float, budget_left: int) -> int:
        return int(min(linear_bid(pctr, self.config, self.rng, budget_left), self.b_max))

    def observe(self, feedback: AgentFeedback) -> None:
        pass

    def end_epoch(self) -> None:
        pass
