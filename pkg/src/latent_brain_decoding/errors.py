from collections.abc import Sequence


class DecodingError(ValueError):
    """Base class for every data or validation error raised by the package."""


class ShapeMismatchError(DecodingError):
    pass


class DegenerateDataError(DecodingError):
    """Zero-variance data, constant vectors or empty groups."""


class SingularSystemError(DecodingError):
    """
    A linear system that cannot be solved reliably.

    Parameters
    ----------
    message : str
        Human-readable description.
    singular_values : Sequence[float], optional
        The offending (near-zero) singular values, when known.
    condition_number : float, optional
        Condition number of the system matrix, when known.
    """

    def __init__(
        self,
        message: str,
        singular_values: Sequence[float] = (),
        condition_number: float | None = None,
    ) -> None:
        details = []
        if singular_values:
            shown = ", ".join(f"{s:.3e}" for s in singular_values[:5])
            details.append(f"singular values: [{shown}]")
        if condition_number is not None:
            details.append(f"condition number: {condition_number:.3e}")
        if details:
            message = f"{message} ({'; '.join(details)})"

        super().__init__(message)
        self.singular_values = list(singular_values)
        self.condition_number = condition_number


class MatrixFormatError(DecodingError):
    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class ConfigError(DecodingError):
    pass
