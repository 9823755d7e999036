"""Exception hierarchy shared by every module."""


class AcconError(Exception):
    """Base class for all package errors."""


class DimensionError(AcconError, ValueError):
    """Operand shapes are incompatible."""


class DomainError(AcconError, ValueError):
    """A value lies outside the mathematical domain of an operation."""


class ContractError(AcconError, ValueError):
    """A documented precondition was violated by the caller."""


class InfeasibleSplitError(AcconError):
    """A balanced split cannot be drawn because a label bin is too small."""

    def __init__(self, bin_index, available, required):
        self.bin_index = bin_index
        self.available = available
        self.required = required
        super().__init__(
            f"dir split infeasible: bin {bin_index} has {available} samples, "
            f"needs {required} for balanced val/test"
        )


class NonFiniteLossError(AcconError, FloatingPointError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, epoch, batch, components):
        self.epoch = epoch
        self.batch = batch
        self.components = dict(components)
        parts = ", ".join(f"{k}={v!r}" for k, v in self.components.items())
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}: {parts}")


class InputError(AcconError):
    """Required input files are missing or inconsistent with the config."""


class CheckFailure(AcconError):
    """A verification command found a violation."""
