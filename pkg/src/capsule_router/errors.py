"""Error types shared across the package.

Every failure carries a stable ``code`` string so callers (and the wire
layer) can branch on it without parsing messages.
"""

from __future__ import annotations

from typing import Any


class ForgeError(Exception):
    """Base error with a stable machine-readable code."""

    def __init__(self, code: str, message: str = "", **details: Any) -> None:
        self.code = code
        self.message = message or code
        self.details = details
        super().__init__(f"{code}: {self.message}")


class CapsuleError(ForgeError):
    pass


class CatalogError(ForgeError):
    pass


class RouterError(ForgeError):
    pass


class ValidatorError(ForgeError):
    pass


class BenchError(ForgeError):
    pass
