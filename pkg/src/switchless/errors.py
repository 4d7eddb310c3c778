"""Exception types shared across the library."""

from __future__ import annotations


class SwitchlessError(Exception):
    """Base class for all library errors."""


class BoundaryViolation(SwitchlessError):
    """Trusted state touched from a context that does not own it."""


class InFlightError(SwitchlessError):
    """Operation attempted while a boundary job is still pending."""


class RegistryError(SwitchlessError):
    """Bad function registration or lookup of an unknown function id."""


class ChannelError(SwitchlessError):
    """Worker lifecycle misuse: double start/stop, call with no worker."""


class BundleError(SwitchlessError):
    """Builder misuse: nested bundles, leaked bundles, append outside a bundle."""


class PredicateError(SwitchlessError):
    """Malformed predicate format string or a type mismatch during evaluation."""


class ConfigError(SwitchlessError):
    """Unparseable or inconsistent cost-model configuration."""


class ValidationError(SwitchlessError):
    """Graph failed validation; carries every defect found."""

    def __init__(self, defects):
        self.defects = list(defects)
        lines = "; ".join(f"node {i}: {msg}" for i, msg in self.defects)
        super().__init__(f"invalid execution graph: {lines}")


# Error codes carried back through the shared region when a job fails.
ERR_UNREGISTERED = "unregistered"
ERR_ARITY = "arity"
ERR_LOOP_GUARD = "loop_guard"
ERR_PREDICATE = "predicate"
ERR_BOUNDS = "bounds"
ERR_FUNCTION = "function_failed"
ERR_WORKER = "worker_crashed"


class GraphExecutionError(SwitchlessError):
    """A node aborted graph execution; earlier writes remain visible."""

    def __init__(self, code: str, node_index: int | None, message: str):
        self.code = code
        self.node_index = node_index
        super().__init__(f"[{code}] node {node_index}: {message}")


class LoopGuardError(GraphExecutionError):
    """A loop exceeded the configured iteration cap."""

    def __init__(self, node_index: int | None, cap: int):
        super().__init__(ERR_LOOP_GUARD, node_index, f"loop exceeded {cap} iterations")
        self.cap = cap
