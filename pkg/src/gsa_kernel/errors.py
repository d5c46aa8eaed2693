"""Exception hierarchy shared by every module."""

from __future__ import annotations


class GsaError(Exception):
    """Base class for all errors raised by gsa_kernel."""


class DimensionError(GsaError, ValueError):
    pass


class NonFiniteError(GsaError, ValueError):
    pass


class EmptyNeighborhoodError(GsaError, ValueError):
    pass


class GroupMismatchError(GsaError, ValueError):
    pass


class NonEnumerableGroupError(GsaError, ValueError):
    pass


class OffGridOffsetError(GsaError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class UnsupportedNeighborhoodError(GsaError, ValueError):
    pass


class InsufficientHeadsError(GsaError, ValueError):
    pass


class UnrepresentableActionError(GsaError, ValueError):
    pass


class ConfigError(GsaError, ValueError):
    pass
