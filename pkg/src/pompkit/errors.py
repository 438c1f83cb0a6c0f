"""Exception types shared across the package."""

from __future__ import annotations

__all__ = [
    "PompkitError",
    "ModelContractError",
    "FilteringFailure",
    "FilteringLimitExceeded",
    "ConfigValidationError",
]


class PompkitError(Exception):
    """Base class for package errors."""


class ModelContractError(PompkitError):
    """A model hook violated its contract (e.g. dmeasure returned NaN)."""


class FilteringFailure(PompkitError):
    """All particle weights vanished at one time step.

    Raised by weight normalization; the filter catches it and applies the
    configured fallback unless the failure budget is exhausted.
    """

    def __init__(self, message: str = "all particle weights are zero", time_index: int | None = None):
        super().__init__(message)
        self.time_index = time_index


class FilteringLimitExceeded(PompkitError):
    """More filtering failures occurred than ``max_fail`` allows."""

    def __init__(self, n_failures: int, max_fail: int, time_index: int):
        super().__init__(
            f"filtering failed {n_failures} times (limit {max_fail}), last at step {time_index}"
        )
        self.n_failures = n_failures
        self.max_fail = max_fail
        self.time_index = time_index


class ConfigValidationError(PompkitError):
    """An experiment configuration failed validation.

    Carries every violation found, not just the first.
    """

    def __init__(self, violations: list[str]):
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {v}" for v in violations))
        self.violations = list(violations)
