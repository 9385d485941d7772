"""Exception hierarchy shared by all fibredrive modules."""


class FibreDriveError(Exception):
    """Base class for every error raised by fibredrive."""


class DomainError(FibreDriveError, ValueError):
    """A point lies outside the domain of a model."""


class EvaluationError(FibreDriveError, ArithmeticError):
    """A field evaluation produced non-finite values."""


class RankChangeError(FibreDriveError):
    """The rank of the Legendre hessian is not constant over sampled points."""


class DegenerateConstraintsError(FibreDriveError):
    """The constraint gradients are linearly dependent at a point."""


class InconsistentLinkError(FibreDriveError):
    """Hamiltonian-side data does not match the Lagrangian it is linked to."""


class SurfaceSamplingError(FibreDriveError):
    """Newton projection onto a constraint surface failed."""


class IntegrationError(FibreDriveError):
    """An integration step produced a non-finite state."""
