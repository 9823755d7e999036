"""Angle-compensated contrastive regression with a small reverse-mode autodiff engine."""

from .errors import (
    AcconError,
    CheckFailure,
    ContractError,
    DimensionError,
    DomainError,
    InfeasibleSplitError,
    InputError,
    NonFiniteLossError,
)

__version__ = "0.1.0"

__all__ = [
    "AcconError",
    "CheckFailure",
    "ContractError",
    "DimensionError",
    "DomainError",
    "InfeasibleSplitError",
    "InputError",
    "NonFiniteLossError",
    "__version__",
]
