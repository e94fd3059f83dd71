"""Lacunary discrete averages over integral forms: lattice enumeration, circle-method
multipliers, r-variation and jump seminorms, and frequency decompositions."""

__version__ = "0.1.0"

from .errors import BudgetError, DomainError, LacvarError, ToleranceError, ValidationError  # noqa: E402
from .forms import Cutoff, IntegralForm, shipped_variety, sum_of_squares  # noqa: E402
from .grid import GridFunction  # noqa: E402

__all__ = [
    "__version__", "BudgetError", "DomainError", "LacvarError", "ToleranceError", "ValidationError",
    "Cutoff", "IntegralForm", "shipped_variety", "sum_of_squares", "GridFunction",
]
