"""Compositional barrier certificates for interconnected switched impulsive systems."""

__version__ = "0.1.0"

from .polynomial import Monomial, Polynomial, Variable, VariableSpace, monomial_basis

__all__ = [
    "Monomial",
    "Polynomial",
    "Variable",
    "VariableSpace",
    "monomial_basis",
    "__version__",
]
