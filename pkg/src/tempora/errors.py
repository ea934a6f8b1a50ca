"""Exception taxonomy shared across the package.

Runtime failures (bad data, unreachable services, corrupt files) derive from
TemporaError; bad invocations (unknown flags or config keys, malformed
values) derive from UsageError. The CLI maps the former to exit code 2 and
the latter to exit code 1.
"""


class TemporaError(Exception):
    """Base class for runtime failures raised by this package."""


class UsageError(TemporaError):
    """Invalid invocation: unknown options, unknown config keys, bad values."""
