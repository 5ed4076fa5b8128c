"""Agent reconstruction and decentralization analysis for early proof-of-work chains."""

__version__ = "0.1.0"
