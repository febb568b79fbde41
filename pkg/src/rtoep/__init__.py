"""Toeplitz operators with separately radial symbols on Reinhardt domains.

Numerical tools for weighted Bergman spaces of complete Reinhardt domains:
monomial normalization constants, the diagonalizing eigenvalue sequences of
Toeplitz operators, and the polar-coordinate geometry of the Bergman metric.
"""

from .domains import (DomainError, DomainSpec, PolarPoint, SymbolSpec, annulus_symbol, catalog_lookup,
                      constant_symbol, domain_from_descriptor, lincomb_symbol, multi_indices, power_symbol,
                      re_z_symbol, symbol_from_descriptor)
from .quadrature import QuadratureError, QuadratureResult, integrate_base, integrate_full_polar, integrate_simplex
from .bergman import (CoefficientVector, KernelSeries, NormalizationTable, apply_R, apply_Rstar, ball_kernel,
                      basis_eval, compute_alpha, kernel_eval)

__version__ = "0.1.0"
