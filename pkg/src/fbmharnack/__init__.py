"""Numerical laboratory for Harnack inequalities of SDEs driven by fBm with H < 1/2.

Modules
-------
specialfn   log-Gamma, Beta and the Gauss hypergeometric function
fbm         Volterra kernel, fBm synthesis and the Cholesky oracle
fraccalc    Riemann-Liouville integrals, K_H and K_H^{-1}
sde         Euler scheme and the coupled system
girsanov    change-of-measure weight for the coupling drift
harnack     constants and Monte Carlo inequality checks
bismut      derivative weight and finite-difference oracle
cli         experiment harness (``fbmharnack`` command)
"""

from .errors import (
    AccuracyError,
    ConsistencyError,
    ContractError,
    DomainError,
    FbmHarnackError,
    NumericalError,
)
from .fbm import FbmPath, TimeGrid, WienerIncrements
from .sde import DriftSpec

__version__ = "0.1.0"

__all__ = [
    "AccuracyError",
    "ConsistencyError",
    "ContractError",
    "DomainError",
    "FbmHarnackError",
    "NumericalError",
    "FbmPath",
    "TimeGrid",
    "WienerIncrements",
    "DriftSpec",
]
