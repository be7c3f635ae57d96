"""Exception hierarchy shared across the pipeline."""

from __future__ import annotations


class GemquadError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(GemquadError):
    """Invalid or incomplete run configuration."""


class SchemaError(GemquadError):
    """A document is missing a required key or violates the record model."""


class SpanError(GemquadError):
    """An answer offset cannot be reconciled with its context."""

    def __init__(self, qa_id: str, message: str):
        super().__init__(f"{qa_id}: {message}")
        self.qa_id = qa_id


class CountError(GemquadError):
    """A requested sample size exceeds the available records."""


class LineError(GemquadError):
    """A line-delimited store contains a malformed line."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class TemplateError(GemquadError):
    """A prompt template or its inputs cannot be rendered."""


class BackendError(GemquadError):
    """A backend call failed. `kind` is one of timeout / protocol / exhausted_retries."""

    TIMEOUT = "timeout"
    PROTOCOL = "protocol"
    EXHAUSTED = "exhausted_retries"

    def __init__(self, kind: str, message: str, attempts: int = 1, status: int | None = None):
        super().__init__(f"{kind}: {message}")
        self.kind = kind
        self.attempts = attempts
        self.status = status


class ContractError(GemquadError):
    """A backend response violates the wire contract (id mismatch, bad span)."""


class PlanError(GemquadError):
    """A training plan is empty or cannot be honored."""


class JournalError(GemquadError):
    """The run journal is missing or corrupt."""
