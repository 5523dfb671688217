from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

from mfbid.data import BidRequest


@dataclass(frozen=True)
class AgentState:
    budget_left: int
    pctr: float


@dataclass(frozen=True)
class AgentFeedback:
    """What one bidder learns after an auction.

    ``market_price`` is only revealed to the winner; a loser sees its own bid
    and the fact that it lost (the market price is censored).
    """
    won: bool
    own_bid: int
    market_price: int | None
    reward: float
    budget_left: int
    terminal: bool


class Bidder(Protocol):
    name: str

    def begin_epoch(self, budget: int) -> None: ...

    def bid(self, request: BidRequest, pctr: float, budget_left: int) -> int: ...

    def observe(self, feedback: AgentFeedback) -> None: ...

    def end_epoch(self) -> None: ...
