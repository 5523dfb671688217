"""Opponent-aware bidding agents in a simulated repeated second-price auction market."""

__version__ = "0.1.0"
