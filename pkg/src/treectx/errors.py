"""Exception hierarchy shared across the package.

Everything raised on purpose derives from TreectxError so the CLI can map
domain failures to a single exit code.
"""


class TreectxError(Exception):
    """Base class for all errors raised by treectx."""


class ShapeError(TreectxError):
    """Operand shapes are incompatible for the requested operation."""


class NumericError(TreectxError):
    """A computation produced (or was fed) a non-finite value."""


class TreeError(TreectxError):
    """Invalid tree structure or node reference."""


class SnapshotError(TreectxError):
    """A snapshot file is malformed or violates the schema."""


class CheckpointError(TreectxError):
    """A checkpoint file is malformed or inconsistent with its use."""


class TrainingError(TreectxError):
    """Training aborted (non-finite loss, empty split, bad config)."""


class SynthError(TreectxError):
    """Invalid synthetic-dataset specification."""
