"""Auction-based relay power allocation for amplify-and-forward networks."""

from .auction import AuctionKind, Allocation, PriceVector, allocate, evaluate, is_epsilon_ne, payment, payoff
from .channel import ChannelGains, Relay, Scenario, ScenarioError, User

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "AuctionKind",
    "ChannelGains",
    "PriceVector",
    "Relay",
    "Scenario",
    "ScenarioError",
    "User",
    "allocate",
    "evaluate",
    "is_epsilon_ne",
    "payment",
    "payoff",
]
