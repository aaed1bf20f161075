"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigError(ValueError):
    """A scenario configuration is malformed or violates a physical invariant."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class PhysicalityWarning(UserWarning):
    """Parameters are usable but cannot describe a real rigid body."""
