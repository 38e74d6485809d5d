"""Deterministic credit-risk measurement for DeFi lending vaults."""

__version__ = "0.1.0"
