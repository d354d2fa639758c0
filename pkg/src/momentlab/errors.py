"""Exception hierarchy shared by all modules."""


class MomentLabError(Exception):
    """Base class for every error raised by momentlab."""


class InvalidSpec(MomentLabError, ValueError):
    """A system description or scenario field violates its preconditions."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class CoincidentEigenvalues(MomentLabError):
    """Two eigenvalues of a generated sequence agree (distinctness fails)."""

    def __init__(self, message, pairs=()):
        super().__init__(message)
        self.pairs = list(pairs)


class DefectiveMode(MomentLabError):
    """The 2x2 mode matrix is not diagonalizable at this mode index."""


class SequenceTooShort(MomentLabError, ValueError):
    pass


class ZeroPerturbation(MomentLabError, ValueError):
    """A perturbation beta_k vanishes, so the two sub-spectra intersect."""


class PrecisionTooLow(MomentLabError):
    """Extended-precision factorization or verification failed at the cap."""

    def __init__(self, message, prec=None):
        super().__init__(message)
        self.prec = prec


class ResidualTooLarge(MomentLabError):
    pass


class VanishingObservation(MomentLabError):
    """A boundary observation coefficient is zero for some mode."""


class InsufficientSamples(MomentLabError, ValueError):
    pass


class DegenerateDesign(MomentLabError, ValueError):
    """Regression basis functions are numerically collinear on the grid."""
