"""Exception types shared across the package."""
from __future__ import annotations

from typing import Any


class CbeLabError(Exception):
    """Base class. ``reason`` is a short machine-readable tag."""

    reason = "error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        return {"reason": self.reason, "message": str(self), "details": _jsonable(self.details)}


class DomainError(CbeLabError, ValueError):
    reason = "domain"


class NumericalError(CbeLabError, ArithmeticError):
    reason = "numerical"


class HypothesisError(CbeLabError, ValueError):
    """Parameters outside the regime where an experiment is meaningful."""

    reason = "hypothesis-violation"


class GateFailure(CbeLabError):
    """A quality gate (ESS floor, oracle mismatch, trend test) failed."""

    reason = "gate-failure"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    return repr(obj)
