"""Exception types shared across the toolkit."""


class AtlasKitError(Exception):
    """Base class for all toolkit errors. The CLI maps these to exit code 1."""


class SchemaError(AtlasKitError):
    """Malformed or inconsistent input data (parse failures, invariant violations)."""


class DomainError(AtlasKitError):
    """A mathematical operation was called outside its domain."""


class FitError(AtlasKitError):
    """A regression could not be run or did not produce a usable result."""
