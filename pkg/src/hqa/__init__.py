"""Gated question-forest inference for driving-scene descriptions."""

__version__ = "0.1.0"

from .forest import Forest, ForestError, QuestionNode, demo_forest, parse_forest, validate_forest
from .kernels import BACKEND as KERNEL_BACKEND
from .traversal import FakeClock, pruned_set, traverse_flat, traverse_hierarchical

__all__ = [
    "Forest",
    "ForestError",
    "QuestionNode",
    "demo_forest",
    "parse_forest",
    "validate_forest",
    "FakeClock",
    "pruned_set",
    "traverse_flat",
    "traverse_hierarchical",
    "KERNEL_BACKEND",
]
