"""Shared exception types."""


class TraceError(ValueError):
    """A trace line or trace file violates the trace grammar."""


class ConfigError(ValueError):
    """A config file (rules, routes, NAT, QoS) failed to parse."""
