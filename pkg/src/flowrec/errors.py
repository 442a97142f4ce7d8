"""Exception hierarchy shared by all flowrec modules."""


class FlowrecError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FlowrecError):
    """Invalid configuration value or inconsistent options."""


class GeometryError(FlowrecError):
    """Geometric precondition violated."""


class PointOutsideDomain(GeometryError):
    """A point that must lie in the (closed) domain does not."""


class InadmissibleRadius(GeometryError):
    """Radius function violates the r0 <= R <= r1 bounds."""


class NumericalError(FlowrecError):
    """A solver or estimator failed on otherwise valid input."""


class NoAdmissibleStep(NumericalError):
    """Line search underflowed without finding an admissible descent step."""


class WrapRiskError(NumericalError):
    """Sampled velocity too close to the encoding limit; phase would wrap."""


class DegenerateHistogramError(NumericalError):
    """Magnitude histogram has fewer than two local maxima."""


class EmptyMaskError(NumericalError):
    """Noise estimation mask selects fewer than two voxels."""


class EmptyDomainError(NumericalError):
    """No voxel intersects the flow domain."""


class GridFormatError(FlowrecError):
    """Malformed voxel grid file."""


class StageError(FlowrecError):
    """A pipeline stage failed; carries the stage name for context."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
