"""Shared-experience deterministic actor-critic with policy-similarity weighting."""

__version__ = "0.1.0"
