"""Numerical laboratory for effective limits of random nonlocal operators.

Modules
-------
env        lazily sampled random checkerboard environments
kernels    kernel families and monotone quadrature tables
operators  grid functions, nonlocal evaluation, extremal bounds
solve      Dirichlet and obstacle solvers on boxes and balls
homog      contact statistics, effective levels, experiment drivers
cli        config-driven runner and check suites
"""

__version__ = "0.1.0"

from .errors import CheckFailure, ConfigurationError, SolverError

__all__ = ["CheckFailure", "ConfigurationError", "SolverError", "__version__"]
