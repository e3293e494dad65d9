from __future__ import annotations

from typing import Any


class CondenseRecError(Exception):
    """Base class for every error raised by condenserec."""


class InvalidArgumentError(CondenseRecError, ValueError):
    """Raised when an operation is called with arguments outside its contract."""


class DatasetError(CondenseRecError):
    """Raised when a dataset cannot be read, written or trusted."""


class DatasetParseError(DatasetError):
    """Raised when a dataset file does not follow the tab-separated format."""

    path: str
    line_number: int

    def __init__(self, message: str, *, path: str, line_number: int) -> None:
        super().__init__(f"{path}:{line_number}: {message}")
        self.path = path
        self.line_number = line_number


class DanglingReferenceError(DatasetError):
    """Raised when a history or impression points at an unknown id."""

    ref_id: str

    def __init__(self, ref_id: str, *, where: str = "") -> None:
        suffix = f" ({where})" if where else ""
        super().__init__(f"Unknown id referenced: {ref_id!r}{suffix}")
        self.ref_id = ref_id


class DatasetValidationError(DatasetError):
    """Raised when a dataset violates an invariant (empty title, bad label, ...)."""


class LlmError(CondenseRecError):
    pass


class LlmParseError(LlmError):
    """Raised when an LLM response cannot be parsed into the expected payload."""

    raw_response: str

    def __init__(self, message: str, *, raw_response: str) -> None:
        super().__init__(message)
        self.raw_response = raw_response


class LlmTransportError(LlmError):
    """Raised when the LLM endpoint stays unreachable after all retries."""


class ChildPromptError(LlmError):
    """Raised when fewer child prompts than requested could be obtained."""

    obtained: int
    requested: int

    def __init__(self, *, obtained: int, requested: int) -> None:
        super().__init__(
            f"Only {obtained} of {requested} child prompts could be parsed"
        )
        self.obtained = obtained
        self.requested = requested


class TrainingError(CondenseRecError):
    pass


class NanLossError(TrainingError):
    """Raised when the training loss stops being finite."""

    def __init__(
        self, *, epoch: int, batch: int, diagnostics: dict[str, Any]
    ) -> None:
        details = ", ".join(f"{k}={v}" for k, v in diagnostics.items())
        super().__init__(
            f"Non-finite loss at epoch {epoch}, batch {batch}: {details}"
        )
        self.epoch = epoch
        self.batch = batch
        self.diagnostics = diagnostics


class ClusteringError(CondenseRecError):
    pass


class EvaluationError(CondenseRecError):
    pass


class ConfigError(CondenseRecError):
    """Raised when the pipeline configuration file or overrides are invalid."""
