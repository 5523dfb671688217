from __future__ import annotations

from typing import Sequence

import numpy as np

from mfbid.survival.distribution import MarketDistribution, PriceSpace
from mfbid.survival.samples import SurvivalSample


def kaplan_meier(samples: Sequence[SurvivalSample], space: PriceSpace) -> MarketDistribution:
    """Aggregate (feature-blind) discrete Kaplan-Meier market-price estimate.

    A sample observed at bucket ``t`` (market price if won, own bid if lost) is
    in the risk set for every bucket ``j <= t``; only uncensored samples count
    as events. ``h_j = d_j / n_j``, and ``h_j = 0`` where nobody is at risk.
    """
    if not samples:
        raise ValueError("kaplan_meier needs at least one sample")
    b = space.b_max
    times = np.array([s.observed_price for s in samples], dtype=np.int64)
    events = np.array([not s.censored for s in samples])
    if times.min() < 1 or times.max() > b:
        raise ValueError(f"observed prices must lie in 1..{b}")
    d = np.bincount(times[events], minlength=b + 1)[1:]
    leaving = np.bincount(times, minlength=b + 1)[1:]
    # n_j = #{t >= j}
    n = np.cumsum(leaving[::-1])[::-1]
    h = np.divide(d, n, out=np.zeros(b), where=n > 0)
    return MarketDistribution.from_hazards(h)
