"""Exception taxonomy shared across the package."""


class UsageError(ValueError):
    """Caller violated a precondition (bad dimensions, bad config value)."""


class NumericError(FloatingPointError):
    """A computation produced non-finite values or degenerate weights."""

    def __init__(self, message: str, *, rollout_index: int | None = None,
                 episode: int | None = None, step: int | None = None):
        super().__init__(message)
        self.rollout_index = rollout_index
        self.episode = episode
        self.step = step


class FormatError(ValueError):
    """A persisted file is corrupt, truncated, or inconsistent with its header."""


class GenerationError(RuntimeError):
    """Demo generation refused to persist output (expert below sanity floor)."""
