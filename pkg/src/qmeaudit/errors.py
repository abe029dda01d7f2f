"""Exception hierarchy shared by all modules."""


class QmeError(Exception):
    """Base class for every error raised by qmeaudit."""


class DegenerateSpectrum(QmeError):
    pass


class SymmetryBroken(QmeError):
    pass


class PoleInOccupation(QmeError):
    pass


class QuadratureDiverged(QmeError):
    def __init__(self, message, coarse=None, fine=None):
        super().__init__(message)
        self.coarse = coarse
        self.fine = fine


class ExtractionFailed(QmeError):
    pass


class NonUniqueSteadyState(QmeError):
    pass


class NonErgodicRateMatrix(QmeError):
    pass


class EvolutionFailed(QmeError):
    pass


class NonHermitianState(QmeError):
    pass


class SplitUnavailable(QmeError):
    pass


class InvalidTestOperator(QmeError):
    pass


class InsufficientData(QmeError):
    pass


class ConfigError(QmeError):
    """Invalid experiment configuration; ``path`` names the failing block."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
