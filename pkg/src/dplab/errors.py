"""Exception types shared across the laboratory."""


class DplabError(Exception):
    """Base class for all package-specific errors."""


# ---------------------------------------------------------------- exponents

class DimensionTooSmall(DplabError):
    """Spatial dimension below the admissible range."""


class ExponentOrder(DplabError):
    """Growth exponents out of order (need 2 <= p < q)."""


class GapTooWide(DplabError):
    """q reaches or exceeds the gap threshold p + p/n."""


class GapTooWideForEmbedding(DplabError):
    """q reaches or exceeds p + p/(n-1), so the interpolation exponent leaves (0,1)."""


class NonpositiveVartheta(DplabError):
    """Iteration exponent came out <= 0; indicates an exponent bookkeeping bug."""


# ------------------------------------------------------------- mesh/regions

class EmptyRegion(DplabError):
    """Requested region has no overlap with the grid cover."""


class DegenerateGap(DplabError):
    """Inner cutoff region touches the outer one; no transition layer left."""


# ------------------------------------------------------------------- fluxes

class NegativeArgument(DplabError):
    """Integrand argument must be nonnegative."""


class EmptySampleSet(DplabError):
    """Structure check needs at least one usable sample."""


# ------------------------------------------------------------------- solver

class SolverError(DplabError):
    """Base for time-stepping failures; carries the partial trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class PicardDiverged(SolverError):
    """Picard loop exhausted its iteration budget without contracting."""


class CgStalled(SolverError):
    """Inner conjugate-gradient solve failed to reach tolerance."""


class TestNotCompactlySupported(DplabError):
    """Test function must vanish on the whole boundary of the space-time box."""


# ---------------------------------------------------------------- estimates

class EmptyLevelSet(DplabError):
    """Level set is empty; both sides of the estimate are zero."""


class LevelSignMismatch(DplabError):
    """Level k must be nonzero and match the requested truncation sign."""


class CylinderOutOfRange(DplabError):
    """Requested cylinder is not covered by the field's grid."""


class SmallnessViolated(DplabError):
    """Smallness condition of the geometric-decay induction fails.

    ``flags`` holds the per-stage decay flags of the majorant sequence, so
    callers can see which stage breaks first; ``margin`` is the offending
    product that had to be <= 1.
    """

    def __init__(self, message, flags=None, margin=None):
        super().__init__(message)
        self.flags = flags
        self.margin = margin


# ------------------------------------------------------------------ harness

class ConfigInvalid(DplabError):
    """Experiment configuration failed validation."""


class InsufficientPoints(DplabError):
    """Not enough distinct data points for the requested fit."""
