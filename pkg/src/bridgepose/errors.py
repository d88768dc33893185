"""Exception types shared across the package."""


class BridgeposeError(Exception):
    """Base class for all package errors."""


class ConfigError(BridgeposeError):
    """Invalid configuration value, unknown key, or broken invariant."""


class GraphError(BridgeposeError):
    """Graph construction failed (bad placement, mismatched shapes)."""


class CodecError(BridgeposeError):
    """Heatmap encode/decode received invalid inputs."""


class AugmentError(BridgeposeError):
    """Degenerate augmentation geometry (zero box, singular affine)."""


class MetricsError(BridgeposeError):
    """Metric computation is undefined for the given inputs."""


class DatasetError(BridgeposeError):
    """Annotation file is malformed or violates the sample invariants."""


class CheckpointError(BridgeposeError):
    """Checkpoint file is corrupt or incompatible."""


class EvalError(BridgeposeError):
    """Evaluation inputs are inconsistent (joint count mismatch etc.)."""


class TrainAbort(BridgeposeError):
    """Training stopped on a non-finite loss; diagnostics were saved."""
