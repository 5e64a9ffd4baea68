"""
Structured errors raised across the pavi package.
"""

from typing import Optional

# Error codes understood by the command line front end
INVALID_INPUT = "invalid-input"
CAPACITY = "capacity"
FAMILY_MISMATCH = "family-mismatch"
DIMENSION_MISMATCH = "dimension-mismatch"
PARSE_ERROR = "parse-error"
MISSING_COLUMN = "missing-column"
MISSING_VALUE = "missing-value"
NON_NUMERIC = "non-numeric"
UNFITTABLE = "unfittable"
UNKNOWN_EXAMPLE = "unknown-example"
TOO_MANY_SUBSETS = "too-many-subsets"
CONFIG_ERROR = "config-error"
IO_ERROR = "io-error"


class PaviError(ValueError):
    """Error carrying a machine-parsable code and a free-form context"""

    def __init__(self, code: str, message: str, context: Optional[str] = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.context = context or ""

    def with_context(self, context: str) -> "PaviError":
        """Return a copy whose context is prefixed with the caller's context"""
        merged = f"{context}; {self.context}" if self.context else context
        return PaviError(self.code, self.message, merged)

    def __str__(self) -> str:
        return f"{self.code}: {self.message}: {self.context}"
