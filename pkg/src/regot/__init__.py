"""Reward evolution with text-attributed task graphs and rollout critics."""

__version__ = "0.1.0"
