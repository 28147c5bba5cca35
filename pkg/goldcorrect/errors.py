"""Defines all errors and warnings reported by goldcorrect."""


class GoldCorrectError(Exception):
    """Base class of every error raised on purpose by goldcorrect."""


class GoldCorrectWarning(UserWarning):
    """Base class of every warning emitted by goldcorrect."""


class InvalidInputError(GoldCorrectError, ValueError):
    """Error when an argument has an unusable value or shape.

    Args:
        what (str): The name of the offending argument.
        reason (str): Why the value was rejected.
    """

    def __init__(self, what, reason):
        """Initialize error."""
        self.what = what
        self.reason = reason
        super().__init__(f'Invalid "{what}": {reason}')


class LabelOutOfRangeError(GoldCorrectError, IndexError):
    """Error when a class id does not fit in the number of classes.

    Args:
        label (int): The offending class id.
        k (int): The number of classes.
    """

    def __init__(self, label, k):
        """Initialize error."""
        self.label = label
        self.k = k
        super().__init__(f"Label {label} is out of range for {k} classes")


class FormatError(GoldCorrectError, ValueError):
    """Error when a file does not follow its expected format.

    Args:
        path (str): The file being parsed.
        reason (str): What is wrong.
        offset (int): Byte offset where parsing failed, if relevant.
        row (int): Row number where parsing failed, if relevant.
    """

    def __init__(self, path, reason, offset=None, row=None):
        """Initialize error."""
        self.path = str(path)
        self.reason = reason
        self.offset = offset
        self.row = row
        location = ""
        if offset is not None:
            location = f" at byte offset {offset}"
        elif row is not None:
            location = f" at row {row}"
        super().__init__(f'"{path}"{location}: {reason}')


class MissingClassError(GoldCorrectError, ValueError):
    """Error when an estimator has no trusted example for some classes.

    Args:
        classes (sequence): The class ids without any trusted example.
    """

    def __init__(self, classes):
        """Initialize error."""
        self.classes = tuple(int(class_id) for class_id in classes)
        super().__init__(
            "No trusted example for class(es) {}. Use a stratified split or "
            "allow the identity fallback".format(", ".join(map(str, self.classes)))
        )


class RegularizationRequiredError(GoldCorrectError, ValueError):
    """Error when the base-rate problem has no unique solution without a proximal term.

    Args:
        rank (int): The rank of the KKT matrix.
        size (int): The size of the KKT matrix.
    """

    def __init__(self, rank, size):
        """Initialize error."""
        super().__init__(
            f"KKT system is rank deficient ({rank} < {size}) with lambda = 0. "
            "Use a strictly positive lambda"
        )


class InsufficientDataError(GoldCorrectError, ValueError):
    """Error when no cell holds enough examples for a chi-square test.

    Args:
        min_count (int): The minimum number of examples a cell needs.
        largest_cell (int): The number of examples in the largest cell.
    """

    def __init__(self, min_count, largest_cell):
        """Initialize error."""
        super().__init__(
            f"No cell has at least {min_count} examples (largest has {largest_cell})"
        )


class DivergenceError(GoldCorrectError, ArithmeticError):
    """Error when the training loss stops being finite.

    Args:
        epoch (int): The epoch during which it happened.
        batch_index (int): The batch index within that epoch.
        loss (float): The offending loss value.
    """

    def __init__(self, epoch, batch_index, loss):
        """Initialize error."""
        self.epoch = epoch
        self.batch_index = batch_index
        super().__init__(
            f"Training diverged at epoch {epoch}, batch {batch_index}: loss is {loss}"
        )


class SolverError(GoldCorrectError, ArithmeticError):
    """Error when a linear system was solved with a residual above tolerance.

    Args:
        residual (float): The relative residual obtained.
        tolerance (float): The accepted tolerance.
    """

    def __init__(self, residual, tolerance):
        """Initialize error."""
        super().__init__(
            f"KKT residual {residual:.3e} is above the tolerance {tolerance:.1e}"
        )


class MethodError(GoldCorrectError, RuntimeError):
    """Error when a correction method fails at one of its stages.

    Args:
        kind (str): The method kind.
        stage (str): The stage that failed.
        cause (Exception): The underlying error.
    """

    def __init__(self, kind, stage, cause):
        """Initialize error."""
        self.kind = kind
        self.stage = stage
        self.cause = cause
        super().__init__(f'Method "{kind}" failed during {stage}: {cause}')


class MissingClassWarning(GoldCorrectWarning):
    """Warning when a missing class row falls back to the identity."""


class ClippedMatrixWarning(GoldCorrectWarning):
    """Warning when negative matrix entries are clipped before training."""


class TrailingBytesWarning(GoldCorrectWarning):
    """Warning when an IDX file holds more bytes than it declares."""


class DegenerateLabelsWarning(GoldCorrectWarning):
    """Warning when calibration labels hold a single class."""
