"""Error type shared by every module.

Each failure carries a stable machine-readable ``code`` so callers (and the
CLI) can branch on it without parsing messages.
"""

from __future__ import annotations


class BorelNSError(Exception):
    """Base error with a stable code such as ``GRID_MISMATCH``."""

    def __init__(self, code: str, message: str = "", **context):
        self.code = code
        self.context = context
        text = f"{code}: {message}" if message else code
        super().__init__(text)


class NoConvergence(BorelNSError):
    """Raised by iterative solvers that exhaust their iteration budget."""

    def __init__(self, message: str = "", **context):
        super().__init__("NO_CONVERGENCE", message, **context)


def require(condition: bool, code: str, message: str = "", **context) -> None:
    """Raise :class:`BorelNSError` with ``code`` unless ``condition`` holds."""
    if not condition:
        raise BorelNSError(code, message, **context)
