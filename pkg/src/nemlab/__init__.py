"""Numerical laboratory for anisotropic Landau-de Gennes interfaces.

Subpackages cover the algebra of symmetric traceless Q-tensors, the
one-dimensional transition-layer machinery, discretized quadratic forms
and their spectra, periodic gradient-flow simulation, and construction of
glued leading-order approximate solutions with residual diagnostics.
"""

from . import tensors, layer, forms, fields, approx

__version__ = "0.1.0"

__all__ = ["tensors", "layer", "forms", "fields", "approx", "__version__"]
