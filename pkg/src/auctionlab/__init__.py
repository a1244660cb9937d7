"""Combinatorial-auction laboratory: valuations, hard instances, mechanisms and lower-bound checkers."""
from .core import (
    LabError,
    UsageError,
    BudgetExceeded,
    Value,
    ValuationProfile,
    bundle,
    items_of,
    precision,
    welfare,
)

__all__ = [
    "LabError", "UsageError", "BudgetExceeded", "Value", "ValuationProfile",
    "bundle", "items_of", "precision", "welfare",
]
__version__ = "0.1.0"
