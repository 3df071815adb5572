"""Exception types raised by the pipeline."""


class GlottalSaliencyError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(GlottalSaliencyError, ValueError):
    """Unsupported raw image layout (channel count, sample depth)."""


class ParameterError(GlottalSaliencyError, ValueError):
    """A parameter violates its documented range or ordering."""


class ShapeError(GlottalSaliencyError, ValueError):
    """Array dimensions of two inputs do not agree."""


class DataError(GlottalSaliencyError, ValueError):
    """Non-finite or otherwise corrupt numeric data."""


class TopologyError(GlottalSaliencyError, ValueError):
    """A curve or element pair violates the lattice connectivity rules."""


class CapacityError(GlottalSaliencyError, RuntimeError):
    """A guard against combinatorial blow-up was exceeded."""


class ContractError(GlottalSaliencyError, ValueError):
    """A geometric precondition (e.g. closed polyline) does not hold."""


class InputError(GlottalSaliencyError, ValueError):
    """Frame ingestion failed (missing files, mismatched dimensions)."""


class NumericError(GlottalSaliencyError, RuntimeError):
    """Non-finite values appeared during accumulation."""
