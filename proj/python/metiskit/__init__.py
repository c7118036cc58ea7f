"""Interpretable controllers for networking systems: decision-tree policy
conversion and hypergraph mask explanations."""

from ._core import *  # noqa: F401,F403

__all__ = [name for name in dir() if not name.startswith("_")]
