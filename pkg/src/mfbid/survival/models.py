from __future__ import annotations

from typing import Protocol, Sequence

import numpy as np

from mfbid.survival.distribution import MarketDistribution, clip_hazards, pdf_from_hazards
from mfbid.survival.samples import SurvivalSample, feature_matrix


class MarketModel(Protocol):
    b_max: int

    def predict_hazards(self, ids) -> np.ndarray: ...

    def pdf(self, features: Sequence[int]) -> np.ndarray: ...

    def pdf_batch(self, feature_rows) -> np.ndarray: ...


class ConstantMarketModel:
    """Feature-blind model returning one distribution for every request (KM, uniform)."""

    def __init__(self, dist: MarketDistribution):
        self.dist = dist
        self.b_max = dist.b_max

    @classmethod
    def uniform(cls, b_max: int) -> "ConstantMarketModel":
        return cls(MarketDistribution.uniform(b_max))

    def predict_hazards(self, ids) -> np.ndarray:
        n = len(np.atleast_2d(np.asarray(ids)))
        return np.tile(self.dist.hazards, (n, 1))

    def predict(self, features) -> MarketDistribution:
        return self.dist

    def pdf(self, features) -> np.ndarray:
        return self.dist.pdf

    def pdf_batch(self, feature_rows) -> np.ndarray:
        return np.tile(self.dist.pdf, (len(feature_rows), 1))


def negative_log_probability(hazards: np.ndarray, prices: np.ndarray) -> np.ndarray:
    """Per-row ``-log p(z)`` under clipped hazards."""
    h = clip_hazards(hazards)
    log_s = np.concatenate([np.zeros((h.shape[0], 1)), np.cumsum(np.log1p(-h), axis=1)], axis=1)
    rows = np.arange(h.shape[0])
    z = np.asarray(prices) - 1
    return -(np.log(h[rows, z]) + log_s[rows, z])


def anlp(model: MarketModel, samples: Sequence[SurvivalSample]) -> float:
    """Average negative log probability of the true market price (uncensored samples only)."""
    if not samples:
        raise ValueError("ANLP needs a non-empty evaluation set")
    if any(s.censored for s in samples):
        raise ValueError("ANLP is defined on uncensored samples only")
    prices = np.array([s.observed_price for s in samples])
    if isinstance(model, ConstantMarketModel):
        hazards = np.broadcast_to(model.dist.hazards, (len(prices), model.b_max))
        return float(np.mean(negative_log_probability(hazards, prices)))
    ids = feature_matrix(samples)
    out = []
    for start in range(0, len(samples), 2048):
        out.append(negative_log_probability(model.predict_hazards(ids[start:start + 2048]),
                                            prices[start:start + 2048]))
    return float(np.mean(np.concatenate(out)))


def aggregate_pdf(model: MarketModel, feature_rows) -> np.ndarray:
    """Predicted market pdf averaged over a sample of requests."""
    return model.pdf_batch(list(feature_rows)).mean(axis=0)


__all__ = ["ConstantMarketModel", "MarketModel", "aggregate_pdf", "anlp",
           "negative_log_probability", "pdf_from_hazards"]
