"""Shared exception hierarchy.

The CLI maps these onto process exit codes: DataError -> 2, NumericError -> 3.
Usage errors are handled by the argument parser itself (exit 1).
"""


class ChordsegError(Exception):
    """Base class for all errors raised by this package."""


class DataError(ChordsegError):
    """Malformed or unusable input data (labels, records, files)."""


class NumericError(ChordsegError):
    """Numerical failure during training (non-finite loss or parameters)."""
