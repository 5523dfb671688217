"""Censored market-price observations and their text file format.

One sample per line, whitespace separated::

    <censored_flag> <price> <feat_id,feat_id,...> [<own_bid>]

``censored_flag`` is 1 when the agent lost (``price`` is then its own bid) and
0 when it won (``price`` is the market price). Winners may carry their own bid
as a fourth column; it feeds the winning-bid loss term.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from mfbid.errors import InputError


@dataclass(frozen=True)
class SurvivalSample:
    features: tuple[int, ...]
    observed_price: int
    censored: bool
    own_bid: int | None = None

    def win_bound(self, b_max: int) -> int | None:
        """Smallest bid bucket known to have won, for the winning-bid loss.

        A tie at the market price counts as not strictly above it, so the bound
        is moved to ``z + 1``; ``b_max + 1`` addresses the mass beyond the grid.
        """
        if self.censored or self.own_bid is None:
            return None
        return min(max(self.own_bid, self.observed_price + 1), b_max + 1)


def validate(samples: Sequence[SurvivalSample], b_max: int) -> None:
    for s in samples:
        if not 1 <= s.observed_price <= b_max:
            raise InputError(f"observed price {s.observed_price} outside 1..{b_max}")


def write_samples(path, samples: Iterable[SurvivalSample]) -> None:
    lines = []
    for s in samples:
        feats = ",".join(str(f) for f in s.features)
        line = f"{int(s.censored)} {s.observed_price} {feats}"
        if s.own_bid is not None and not s.censored:
            line += f" {s.own_bid}"
        lines.append(line)
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_samples(path) -> list[SurvivalSample]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split()
        try:
            flag, price, feats = int(parts[0]), int(parts[1]), parts[2]
            own = int(parts[3]) if len(parts) > 3 else None
            features = tuple(int(f) for f in feats.split(",")) if feats else ()
        except (IndexError, ValueError) as exc:
            raise InputError(f"{path}:{lineno}: malformed survival sample: {exc}") from None
        if flag not in (0, 1):
            raise InputError(f"{path}:{lineno}: censored flag must be 0 or 1")
        out.append(SurvivalSample(features, price, bool(flag), own))
    return out


def feature_matrix(samples: Sequence[SurvivalSample]) -> np.ndarray:
    """Stack per-sample feature ids into an (n, fields) int array."""
    widths = {len(s.features) for s in samples}
    if len(widths) != 1:
        raise InputError(f"samples disagree on field count: {sorted(widths)}")
    return np.array([s.features for s in samples], dtype=np.int64)
