# ============================================================================
# Error Hierarchy
# ============================================================================


class PanelError(Exception):
    """Base class for every error raised by the engine."""

    exit_code: int = 1

    def __init__(self, message: str):
        super().__init__(message)

    @property
    def message(self) -> str:
        return self.args[0]


class ValidationError(PanelError):
    """Input, configuration or precondition problem (CLI exit code 2)."""

    exit_code = 2


class NumericalError(PanelError):
    """Numerical failure during estimation (CLI exit code 3)."""

    exit_code = 3


class InvalidSpec(ValidationError):
    pass


class UnknownVariable(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class SeriesTooShort(ValidationError):
    pass


class InsufficientEntities(ValidationError):
    pass


class InsufficientData(ValidationError):
    pass


class InvalidPValue(ValidationError):
    pass


class UnmappedVariable(ValidationError):
    pass


class ThresholdOutOfRange(ValidationError):
    pass


class IoError(ValidationError):
    pass


class MalformedRow(ValidationError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line


class DuplicateObservation(ValidationError):
    def __init__(self, line: int, key: tuple[str, int, str]):
        entity, year, variable = key
        super().__init__(
            f"line {line}: duplicate observation for entity={entity!r} "
            f"year={year} variable={variable!r}"
        )
        self.line = line
        self.key = key


class RankDeficient(NumericalError):
    pass


class SingularRestriction(NumericalError):
    pass


class CholeskyFailure(NumericalError):
    pass


class ExplosiveWithoutFlag(NumericalError):
    pass


class StageFailed(PanelError):
    """A pipeline stage aborted; keeps the exit code of the underlying error."""

    def __init__(self, stage: str, cause: PanelError):
        super().__init__(f"[{stage}] {cause.message}")
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code
