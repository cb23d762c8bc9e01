"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes (see ``spectral_lab.cli``).
"""


class SpectralLabError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(SpectralLabError):
    pass


class BudgetExceeded(SpectralLabError):
    """A requested computation is larger than the configured cap."""


class NonHermitianInput(SpectralLabError, ValueError):
    pass


class EigenFailure(SpectralLabError):
    pass


class DomainError(SpectralLabError, ValueError):
    pass


class OrderUnavailable(SpectralLabError):
    """A derivative beyond ``SymbolFunction.max_order`` was required."""


class GridTooCoarse(SpectralLabError):
    pass


class SpectrumOutsideGrid(SpectralLabError, ValueError):
    pass


class EmptyInput(SpectralLabError, ValueError):
    pass


class TooShort(SpectralLabError, ValueError):
    pass


class NotPositive(SpectralLabError, ValueError):
    pass


class WindowTooLarge(BudgetExceeded):
    pass


class DisconnectedBase(SpectralLabError, ValueError):
    pass


class OriginClosed(SpectralLabError):
    pass


class BufferExceedsWindow(SpectralLabError, ValueError):
    pass


class NegativeSymbol(SpectralLabError, ValueError):
    pass


class WindowExceeded(SpectralLabError, ValueError):
    pass


class WindowTooSmall(SpectralLabError, ValueError):
    pass


class BadTheta(SpectralLabError, ValueError):
    pass
