"""Exception types shared across the package."""


class ClawError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(ClawError, ValueError):
    pass


class DomainError(ClawError, ValueError):
    pass


class ContractError(ClawError, ValueError):
    """A precondition of an operation was violated by the caller."""


class StructuralError(ClawError, ValueError):
    """A snapshot or store does not line up with the model it is applied to."""


class FormatError(ClawError, ValueError):
    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(ClawError, ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class TrainingDivergenceError(ClawError, RuntimeError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value!r} at optimizer step {step}")
        self.step = step
        self.value = value


class UnknownTaskError(ClawError, LookupError):
    pass
