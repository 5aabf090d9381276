"""Exception types shared across the package."""

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the domain of the function."""


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky factorization hit a non-positive pivot.

    ``pivot`` is the zero-based index of the failing diagonal entry and
    ``group`` is set when the failure happened inside a grouped likelihood.
    """

    def __init__(self, pivot, group=None):
        self.pivot = pivot
        self.group = group
        where = f" in group {group!r}" if group is not None else ""
        super().__init__(f"matrix is not positive definite (pivot {pivot}{where})")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending field."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
