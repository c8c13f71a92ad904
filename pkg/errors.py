class BftsError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(BftsError):
    """Invalid or degenerate configuration."""


class GraphFormatError(BftsError):
    """A graph or graph file violates the graph invariants."""


class ShapeError(BftsError):
    """Operand shapes do not agree."""


class NonFiniteError(BftsError):
    """A forward computation produced NaN or infinity."""


class DegenerateGroupError(BftsError):
    """A metric or loss needs both groups (or classes) but one is empty."""


class InstanceTooLargeError(BftsError):
    """Exhaustive search was asked for an instance beyond its limit."""


class CheckpointError(BftsError):
    """A parameter checkpoint could not be parsed."""
