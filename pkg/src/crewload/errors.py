"""Error taxonomy shared across the package.

The CLI maps these onto distinct exit codes (config 2, IO 3, numeric 4).
"""

from __future__ import annotations


class ConfigError(ValueError):
    """Invalid configuration file, flag, or parameter combination."""


class CheckpointError(RuntimeError):
    """Unreadable, corrupt, or incompatible checkpoint file."""


class ShapeMismatchError(CheckpointError):
    """Checkpoint shapes do not match the requested environment."""


class NumericError(ArithmeticError):
    """Non-finite values detected during training or evaluation."""
