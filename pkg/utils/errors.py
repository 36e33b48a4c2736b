"""
Exception types shared by the library modules and the CLI.
"""

import numpy as np


class SimlabError(Exception):
    """Base class for every error raised by the lab."""


class InvalidArgumentError(SimlabError, ValueError):
    """An operation received an argument outside its domain."""


class PrecodingSingularError(SimlabError, np.linalg.LinAlgError):
    """
    Raised when a Gram matrix is too ill-conditioned to invert.

    Args:
        condition (float): The condition number estimate (``inf`` if singular).
        cap (float): The configured condition-number cap.
    """

    def __init__(self, condition, cap):
        self.condition = float(condition)
        self.cap = float(cap)
        super().__init__(
            f"Gram matrix condition number {self.condition:.3e} exceeds cap {self.cap:.1e}"
        )


class ConfigError(SimlabError, ValueError):
    """
    Raised when a scenario configuration cannot be parsed or validated.

    Args:
        key (str, optional): Dotted name of the offending key.
        message (str): What is wrong with it.
    """

    def __init__(self, key, message):
        self.key = key
        self.message = message
        prefix = f"{key}: " if key else ""
        super().__init__(f"{prefix}{message}")


class ResultIOError(SimlabError, OSError):
    """Raised when result files cannot be read or written."""

    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{self.path}: {message}")
