class ValidationError(Exception):
    """
    Raised for invalid input or configuration
    """

    pass


class NumericalError(Exception):
    """
    Raised when a computation fails to meet its numerical contract
    """

    pass


class GridError(ValidationError):
    """
    Raised for out-of-range sites, frequencies or grid sizes
    """

    pass


class HermitianError(ValidationError):
    """
    Raised when a spectrum does not represent a real field
    """

    pass


class FormatError(ValidationError):
    """
    Raised for malformed grid, table or image files
    """

    pass


class KernelError(ValidationError):
    """
    Raised for covariance kernels whose multiplier is not admissible on a grid.
    """

    def __init__(self, message, frequency=None):
        super().__init__(message)
        self.frequency = frequency


class ZeroLimitError(ValidationError):
    """
    Raised when a kernel's multiplier vanishes in the limit
    """

    pass


class ZeroMeanError(ValidationError):
    """
    Raised for inputs that must sum to zero over the torus but do not
    """

    pass


class SizeCapError(ValidationError):
    """
    Raised when a brute-force computation is requested on too large a grid
    """

    pass


class AliasingError(ValidationError):
    """
    Raised when a test function has modes outside the frequency window
    """

    pass


class EpsilonError(ValidationError):
    """
    Raised for Sobolev exponents at or below the tightness threshold
    """

    pass


class ConfigError(ValidationError):
    """
    Raised for invalid run configuration
    """

    pass


class StabilizationError(NumericalError):
    """
    Raised when toppling does not reach the requested tolerance.
    """

    def __init__(self, message, residual, rounds):
        super().__init__(message)
        self.residual = residual
        self.rounds = rounds
