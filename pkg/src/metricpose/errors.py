"""Exception hierarchy.

Everything raised deliberately by this package derives from ``PoseGeometryError``.
Subclasses of ``NumericalError`` signal a well-formed request that has no usable
numerical answer (degenerate geometry, non-convergence); the CLI maps those to
exit code 1 and everything else to exit code 2.
"""


class PoseGeometryError(Exception):
    pass


class ContractError(PoseGeometryError, ValueError):
    """An argument violates a documented precondition (wrong space tag, shape, ...)."""


class ConfigurationError(PoseGeometryError, ValueError):
    pass


class InvalidInputError(ContractError):
    pass


class InvalidRotationError(ContractError):
    pass


class OutOfVolumeError(ContractError):
    pass


class NumericalError(PoseGeometryError):
    pass


class BehindCameraError(NumericalError):
    def __init__(self, message, joint=None):
        super().__init__(message)
        self.joint = joint


class DegenerateGeometryError(NumericalError):
    pass


class UnderdeterminedError(DegenerateGeometryError):
    pass


class NoBonesError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    """Raised when an iterative solver stops without meeting its tolerance.

    The final iterate is kept on the exception so callers can inspect or use it.
    """

    def __init__(self, message, z0=None, cost=None, iterations=None):
        super().__init__(message)
        self.z0 = z0
        self.cost = cost
        self.iterations = iterations
