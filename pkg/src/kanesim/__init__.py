"""Dephasing simulator for one- and two-donor Kane spin qubits."""
from ._kernels import BACKEND
from .errors import CalibrationError, DomainError, IntegrationError, KaneSimError, MissingFixtureError

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CalibrationError",
    "DomainError",
    "IntegrationError",
    "KaneSimError",
    "MissingFixtureError",
    "__version__",
]
