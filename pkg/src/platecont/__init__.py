"""Numerical machinery for anisotropic Kirchhoff-Love plates.

The package factors the quartic principal symbol of the plate operator
into two second order elliptic forms, builds the quadratic Carleman
weights that go with the factorization, solves desk-scale plate problems
by finite differences, and measures every verifiable inequality on those
solutions: weighted a-priori estimates, three-sphere certificates and
propagation-of-smallness chains.
"""

__version__ = "0.1.0"

from . import carleman_frame
from . import continuation
from . import elasticity
from . import fields
from . import inequalities
from . import plate_solver
from . import symbol_factor

__all__ = [
    "carleman_frame",
    "continuation",
    "elasticity",
    "fields",
    "inequalities",
    "plate_solver",
    "symbol_factor",
    "__version__",
]
