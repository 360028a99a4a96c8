"""Exception types raised by the simulator."""


class KaneSimError(Exception):
    """Base class for all simulator errors."""


class DomainError(KaneSimError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class IntegrationError(KaneSimError, RuntimeError):
    """The master-equation integration failed or produced an invalid state.

    Attributes
    ----------
    t_reached : float or None
        Time (s) the integrator had reached when it gave up.
    """

    def __init__(self, message, t_reached=None):
        super().__init__(message)
        self.t_reached = t_reached


class CalibrationError(KaneSimError, RuntimeError):
    """Calibration could not push the gate error below the tolerance.

    Attributes
    ----------
    best_error : float
        Best objective value found.
    best_parameters : numpy.ndarray
        Free-parameter vector at the best point.
    sequence : PulseSequence or None
        The best sequence found, so callers can inspect or reuse it.
    """

    def __init__(self, message, best_error, best_parameters, sequence=None):
        super().__init__(message)
        self.best_error = best_error
        self.best_parameters = best_parameters
        self.sequence = sequence


class MissingFixtureError(KaneSimError, FileNotFoundError):
    """No calibrated pulse sequence is available for a gate."""
