"""Exception hierarchy shared by every ktclair module."""


class KtClairError(Exception):
    """Base class for all ktclair failures."""


class ShapeError(KtClairError, ValueError):
    """A tensor violates a shape or value invariant."""

    rule = "shape-error"

    def __init__(self, message: str):
        super().__init__(f"{self.rule}: {message}")


class ShapeMismatchError(ShapeError):
    """Operand shapes do not agree."""

    rule = "shape-mismatch"


class NonFiniteError(ShapeError):
    """A tensor holds NaN or Inf entries."""

    rule = "non-finite-entry"


class EmptyDimensionError(ShapeError):
    """A dimension is below its minimum extent."""

    rule = "empty-dimension"


class NormalizationError(ShapeError):
    """Sensitivity maps are not normalized."""

    rule = "non-normalized"


class MaskError(ShapeError):
    """A sampling mask violates its ACS or coverage invariants."""

    rule = "mask-invariant"


class KtcFormatError(KtClairError):
    """A KTC buffer or file is malformed."""


class ArtifactMismatchError(KtClairError):
    """Artifacts were produced under different configurations."""


class EmptyACSError(KtClairError, ValueError):
    """The mask carries no calibration lines."""


class AllZeroACSError(KtClairError, ValueError):
    """The calibration region holds no signal."""


class InsufficientACSError(KtClairError, ValueError):
    """The calibration region is too small for the requested kernel."""


class IterationIndexError(KtClairError, IndexError):
    """An unroll index is outside the configured schedule."""


class MetricError(KtClairError, ValueError):
    """A metric cannot be evaluated on the given inputs."""


class ConfigError(KtClairError, ValueError):
    """A configuration document is malformed or violates an invariant."""


class NumericalContractError(KtClairError):
    """A numerical invariant check failed."""
