"""Shared exception types and process exit codes."""

from __future__ import annotations

EXIT_OK = 0
EXIT_CONTRACT = 1
EXIT_TRANSPORT = 2


class StepLabError(Exception):
    """Base class for all toolkit errors."""


class ContractError(StepLabError):
    """A precondition or invariant was violated by the caller or by stored data."""


class ConfigError(ContractError):
    """Invalid or incomplete configuration."""


class CapabilityError(StepLabError):
    """A backend lacks a capability the requested operation needs."""

    def __init__(self, backend: str, capability: str):
        super().__init__(f"backend {backend!r} does not support {capability}")
        self.backend = backend
        self.capability = capability


class TransportError(StepLabError):
    """Transport-level failure that persisted through all retry attempts."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempt(s))")
        self.attempts = attempts


class VersionConflict(StepLabError):
    """Optimistic-versioning conflict: the task changed since it was fetched."""
