"""Exception hierarchy shared by every focuskit module."""


class FocusKitError(Exception):
    """Base class for all errors raised by focuskit."""


class InvalidBatch(FocusKitError, ValueError):
    pass


class NonFiniteScore(InvalidBatch):
    pass


class InvalidWeights(FocusKitError, ValueError):
    pass


class ConfigError(FocusKitError, ValueError):
    pass


class ClipInfeasible(ConfigError):
    pass


class InvalidTarget(FocusKitError, ValueError):
    pass


class DegenerateSpace(FocusKitError, ValueError):
    pass


class AdvantageTooWeak(FocusKitError):
    """The solution set does not carry enough reweighted mass for the sweep."""
