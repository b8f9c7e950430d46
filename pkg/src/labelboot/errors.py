"""Exception hierarchy shared by every module."""


class LabelbootError(Exception):
    """Base class for all package errors."""


class ValidationError(LabelbootError, ValueError):
    """An input violates a documented invariant."""


class DimensionMismatch(ValidationError):
    pass


class LabelOutOfRange(ValidationError):
    pass


class RowSumError(ValidationError):
    """A probability row does not sum to one within tolerance."""

    def __init__(self, row, total):
        self.row = row
        self.total = total
        super().__init__(f"row {row} sums to {total!r}, not 1")


class ParseError(LabelbootError, ValueError):
    pass


class EmptyClass(LabelbootError, ValueError):
    pass


class EmptyCalibrationClass(EmptyClass):
    pass


class ClassTooSmall(LabelbootError, ValueError):
    pass


class DegenerateDesign(LabelbootError, ValueError):
    pass


class NonConvergence(LabelbootError, RuntimeError):
    """The optimizer hit its iteration cap before the gradient tolerance."""

    def __init__(self, iterations, grad_norm):
        self.iterations = iterations
        self.grad_norm = grad_norm
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(gradient max-norm {grad_norm:.3e})"
        )


class TooFewSamples(LabelbootError, ValueError):
    pass


class EmptyData(LabelbootError, ValueError):
    pass


class EmptyStratum(LabelbootError, ValueError):
    pass


class StatisticUndefined(LabelbootError, ArithmeticError):
    """Raised by a statistic that has no value on a given resample."""


class RepetitionFailed(LabelbootError, RuntimeError):
    def __init__(self, rep, seed, stage, cause):
        self.rep = rep
        self.seed = seed
        self.stage = stage
        super().__init__(f"repetition {rep} (seed {seed}) failed during {stage}: {cause}")
