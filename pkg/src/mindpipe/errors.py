"""Exception hierarchy shared across the pipeline."""


class MindpipeError(Exception):
    """Base class for all pipeline errors."""


class ConfigurationError(MindpipeError):
    """Bad settings: unknown tokenizer/style, invalid config values."""


class ValidationError(MindpipeError):
    """Bad data: malformed inputs, violated preconditions."""


class ScoreParseError(ValidationError):
    """Judge reply did not contain a usable score for some metric."""

    def __init__(self, metric: str, message: str | None = None):
        self.metric = metric
        super().__init__(message or f"could not parse a 1-5 score for metric {metric!r}")


class UndefinedCorrelationError(ValidationError):
    """Rank correlation is undefined (a variable has zero rank variance)."""


class BudgetExhaustedError(MindpipeError):
    """Prompt alone meets or exceeds the total token limit."""


class TransportError(MindpipeError):
    """Network-level failure talking to an endpoint (retryable)."""


class ProtocolError(MindpipeError):
    """Endpoint answered, but not with a usable completion (not retryable)."""


class EndpointError(MindpipeError):
    """Endpoint unusable after exhausting retries."""
