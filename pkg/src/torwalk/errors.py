"""Exceptions shared across the package, mapped to CLI exit codes."""


class ConfigError(ValueError):
    """Invalid run configuration (exit code 1)."""


class VerificationFailure(RuntimeError):
    """A numerical check or verification did not pass (exit code 2)."""


class ResourceLimit(RuntimeError):
    """A computation would exceed the configured memory/size budget (exit code 3)."""
