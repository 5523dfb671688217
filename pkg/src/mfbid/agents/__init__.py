from mfbid.agents.base import AgentFeedback, AgentState, Bidder
from mfbid.agents.ddpg import (
    DdpgAgent,
    DdpgConfig,
    actor_forward,
    critic_q,
    critic_q_meanfield,
    to_bid_price,
)
from mfbid.agents.linear import LinearBidder, LinearBidderConfig, linear_bid
from mfbid.agents.replay import ReplayMemory, Transition

__all__ = [
    "AgentFeedback",
    "AgentState",
    "Bidder",
    "DdpgAgent",
    "DdpgConfig",
    "LinearBidder",
    "LinearBidderConfig",
    "ReplayMemory",
    "Transition",
    "actor_forward",
    "critic_q",
    "critic_q_meanfield",
    "linear_bid",
    "to_bid_price",
]
