"""
.. module:: exception
   :platform: Unix, Windows
   :synopsis: error classes raised by the solver library

"""


class NeumannLowRankError(Exception):
    """Base class of every error raised by the library."""

    def __init__(self, message):
        self.message = f"ERROR:: {message}"
        super().__init__(self.message)


class InvalidGeometry(NeumannLowRankError):
    def __init__(self, reason):
        super().__init__(f"geometry: {reason}")


class InsufficientRefinement(NeumannLowRankError):
    def __init__(self, level):
        super().__init__(f"mesh: refinement level {level} produces no interior vertices.")


class InvalidSubdomainWeights(NeumannLowRankError):
    def __init__(self, expected, got):
        super().__init__(f"fem: expected {expected} finite subdomain weights, got {got}.")


class NotPositiveDefinite(NeumannLowRankError):
    def __init__(self, pivot):
        self.pivot = pivot
        super().__init__(f"cholesky: nonpositive pivot at index {pivot}.")


class DimensionMismatch(NeumannLowRankError):
    def __init__(self, expected, got):
        super().__init__(f"dimension mismatch: expected {expected}, got {got}.")


class EllipticityViolation(NeumannLowRankError):
    def __init__(self, bound):
        super().__init__(f"uniform ellipticity violated: contraction bound {bound:.6g} is not below 1.")


class IndexSetOverflow(NeumannLowRankError):
    def __init__(self, size, cap):
        super().__init__(f"legendre: index set of size {size} exceeds the cap {cap}.")


class AxisOutOfRange(NeumannLowRankError):
    def __init__(self, axis, d):
        super().__init__(f"legendre: axis {axis} outside 1..{d}.")


class InvalidTolerance(NeumannLowRankError):
    def __init__(self, tol):
        super().__init__(f"lowrank: tolerance must be nonnegative, got {tol}.")


class TaylorDegreeExceeded(NeumannLowRankError):
    def __init__(self, degree, cap):
        super().__init__(f"neumann: Taylor degree {degree} exceeds the cap {cap}.")


class UnsupportedGeometry(NeumannLowRankError):
    def __init__(self, kind, needed="checkerboard(2)"):
        super().__init__(f"{kind} geometry is not supported here, {needed} is required.")


class SingularInteriorBlock(NeumannLowRankError):
    def __init__(self, subdomain):
        super().__init__(f"skeleton: interior block of subdomain {subdomain} is singular.")


class InsufficientSamples(NeumannLowRankError):
    def __init__(self, n_samples, minimum):
        super().__init__(f"oned: {n_samples} samples given, at least {minimum} needed.")


class InvalidWorkerCount(NeumannLowRankError):
    def __init__(self, name):
        super().__init__(f"{name}: worker count should not be a negative number.")


class InvalidConfig(NeumannLowRankError):
    def __init__(self, reason):
        super().__init__(f"config: {reason}")


class InvariantViolation(NeumannLowRankError):
    def __init__(self, check, detail=""):
        self.check = check
        super().__init__(f"{check} failed. {detail}".strip())


class CachedParameterMismatch(NeumannLowRankError):
    def __init__(self, label, name, cached, given):
        super().__init__(f"{label}: cached discretization has {name}={cached!r}, {given!r} requested. "
                         f"Pass force=True to rebuild.")
