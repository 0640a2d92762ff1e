"""Lorentz-model hyperbolic knowledge-aware recommendation with model-level
contrastive augmentations (dropout, cross-layer, pruning views)."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    CheckpointError,
    ConfigError,
    DataError,
    DimensionError,
    EmptyNeighborhood,
    HCMKRError,
    ManifoldError,
    NumericalError,
)
