"""Exception types shared across the package."""


class LnsError(Exception):
    """Base class for all package errors."""


class DimensionError(LnsError, ValueError):
    """An assignment or feature matrix does not match the instance size."""


class CapacityError(LnsError):
    """Brute-force enumeration would exceed the configured cap."""


class SchemaError(LnsError, ValueError):
    """A serialized document is malformed or violates the file schema.

    ``field`` names the offending field when known, ``location`` points into
    the document (JSON line/column or a path such as ``vars[3]``).
    """

    def __init__(self, message, field=None, location=None):
        self.field = field
        self.location = location
        parts = [message]
        if field is not None:
            parts.append(f"field={field!r}")
        if location is not None:
            parts.append(f"at {location}")
        super().__init__(" ".join(parts))


class ContractError(LnsError):
    """A caller broke an operation's precondition (e.g. infeasible incumbent)."""


class SolverError(LnsError):
    """The LP core failed numerically after its anti-cycling retries."""


class TrainingError(LnsError):
    """Policy training diverged (non-finite probabilities or parameters)."""


class ConfigurationError(LnsError):
    """A benchmark or CLI configuration is incomplete or inconsistent."""
