"""Exception hierarchy shared across pipeline stages.

Exit-code mapping used by the CLI: ConfigError -> 2, StageError -> 3,
IntegrityError -> 4.
"""


class ScreeningError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(ScreeningError):
    """Invalid or incomplete configuration (missing files, bad template slots)."""


class StageError(ScreeningError):
    """A pipeline stage failed in a way its contract does not absorb."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"{stage}: {message}")


class IntegrityError(ScreeningError):
    """Persisted artifact is missing or does not match its recorded hash."""


class ValidationError(ScreeningError):
    """Caller-supplied data violates a contract (bad decision ids, counts).

    ``fields`` maps field name to human-readable message; the HTTP layer
    serializes it into 422 bodies.
    """

    def __init__(self, message: str, fields: dict[str, str] | None = None):
        self.fields = fields or {}
        super().__init__(message)


class ContractViolation(ScreeningError):
    """Internal invariant broken by the caller (e.g. mixed resume ids)."""


class TransportError(ScreeningError):
    """HTTP transport failure. ``retryable`` separates 429/5xx/timeouts from 4xx."""

    def __init__(self, message: str, status: int | None = None, retryable: bool = False):
        self.status = status
        self.retryable = retryable
        super().__init__(message)


class RetriesExhausted(TransportError):
    """All retry attempts for a retryable transport failure were consumed."""

    def __init__(self, message: str, attempts: int, last: TransportError | None = None):
        self.attempts = attempts
        self.last = last
        super().__init__(message, status=last.status if last else None, retryable=False)
