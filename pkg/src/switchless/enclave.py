"""Simulated trusted/untrusted boundary with deterministic transition accounting.

Real hardware transition times are replaced by a cost model: every boundary
crossing adds its modeled cycle cost to a ledger, so experiments compare
counters and modeled cycles instead of wall-clock measurements.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .errors import BoundaryViolation, ConfigError, InFlightError

CACHE_WARM = "warm"
CACHE_COLD = "cold"

# Switchless crossing overhead is ~600 cycles on a warm cache and ~1400 on a
# cold one; full transitions are ~20.3x / ~18.6x more expensive, which fixes
# the derived defaults below (20.3*600 = 12180, 18.6*1400 = 26040).
WARM_SWITCHLESS_OVERHEAD = 600
COLD_SWITCHLESS_OVERHEAD = 1400
WARM_ECALL_COST = 12180
COLD_ECALL_COST = 26040
DEFAULT_LOCAL_OP_COST = 10


@dataclass(frozen=True)
class CostModel:
    """Modeled cycle costs for boundary crossings and in-enclave bookkeeping."""

    ecall_cost: int
    switchless_overhead: int
    cache_mode: str = CACHE_WARM
    local_op_cost: int = DEFAULT_LOCAL_OP_COST

    def __post_init__(self):
        if self.cache_mode not in (CACHE_WARM, CACHE_COLD):
            raise ConfigError(f"unknown cache_mode {self.cache_mode!r}")
        for name in ("ecall_cost", "switchless_overhead", "local_op_cost"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.switchless_overhead >= self.ecall_cost:
            raise ConfigError("switchless_overhead must be < ecall_cost")

    @classmethod
    def warm(cls, local_op_cost: int = DEFAULT_LOCAL_OP_COST) -> "CostModel":
        return cls(WARM_ECALL_COST, WARM_SWITCHLESS_OVERHEAD, CACHE_WARM, local_op_cost)

    @classmethod
    def cold(cls, local_op_cost: int = DEFAULT_LOCAL_OP_COST) -> "CostModel":
        return cls(COLD_ECALL_COST, COLD_SWITCHLESS_OVERHEAD, CACHE_COLD, local_op_cost)

    @classmethod
    def for_mode(cls, cache_mode: str) -> "CostModel":
        return cls.cold() if cache_mode == CACHE_COLD else cls.warm()

    @classmethod
    def from_file(cls, path) -> "CostModel":
        """Load `key=value` lines; cache_mode picks the default base costs."""
        pairs = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.rstrip()!r}")
                key, value = (part.strip() for part in line.split("=", 1))
                if key in pairs:
                    raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
                pairs[key] = value

        known = {"ecall_cost", "switchless_overhead", "cache_mode", "local_op_cost"}
        unknown = set(pairs) - known
        if unknown:
            raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")

        mode = pairs.get("cache_mode", CACHE_WARM)
        base = cls.for_mode(mode)
        try:
            ecall = int(pairs.get("ecall_cost", base.ecall_cost))
            overhead = int(pairs.get("switchless_overhead", base.switchless_overhead))
            local = int(pairs.get("local_op_cost", base.local_op_cost))
        except ValueError as exc:
            raise ConfigError(f"{path}: non-integer cost value ({exc})") from exc
        return cls(ecall, overhead, mode, local)


@dataclass(frozen=True)
class LedgerSnapshot:
    ecall_count: int
    switchless_job_count: int
    worker_poll_iterations: int
    local_op_count: int
    modeled_cycles: int

    def __sub__(self, earlier: "LedgerSnapshot") -> "LedgerSnapshot":
        return LedgerSnapshot(
            self.ecall_count - earlier.ecall_count,
            self.switchless_job_count - earlier.switchless_job_count,
            self.worker_poll_iterations - earlier.worker_poll_iterations,
            self.local_op_count - earlier.local_op_count,
            self.modeled_cycles - earlier.modeled_cycles,
        )

    @property
    def transitions(self) -> int:
        return self.ecall_count + self.switchless_job_count


class TransitionLedger:
    """Counts every boundary event and accumulates its modeled cycle cost.

    Updated from at most two threads (client and worker); each update takes
    the internal lock so counters never tear.
    """

    def __init__(self, cost_model: CostModel | None = None):
        self.cost_model = cost_model or CostModel.warm()
        self._lock = threading.Lock()
        self._busy_probes = []
        self._zero()

    def _zero(self):
        self.ecall_count = 0
        self.switchless_job_count = 0
        self.worker_poll_iterations = 0
        self.local_op_count = 0
        self.modeled_cycles = 0

    def attach_busy_probe(self, probe):
        """Register a callable consulted by reset(); truthy means in flight."""
        self._busy_probes.append(probe)

    def record_ecall(self):
        with self._lock:
            self.ecall_count += 1
            self.modeled_cycles += self.cost_model.ecall_cost

    def record_job(self):
        with self._lock:
            self.switchless_job_count += 1
            self.modeled_cycles += self.cost_model.switchless_overhead

    def record_poll(self):
        # Busy-wait iterations are counted but never charged: their cost is
        # scheduling noise, and charging them would break determinism.
        with self._lock:
            self.worker_poll_iterations += 1

    def record_local(self, ops: int = 1):
        with self._lock:
            self.local_op_count += ops
            self.modeled_cycles += ops * self.cost_model.local_op_cost

    def snapshot(self) -> LedgerSnapshot:
        with self._lock:
            return LedgerSnapshot(
                self.ecall_count,
                self.switchless_job_count,
                self.worker_poll_iterations,
                self.local_op_count,
                self.modeled_cycles,
            )

    def expected_cycles(self) -> int:
        """Recompute the accounting identity from the counters alone."""
        with self._lock:
            return (
                self.ecall_count * self.cost_model.ecall_cost
                + self.switchless_job_count * self.cost_model.switchless_overhead
                + self.local_op_count * self.cost_model.local_op_cost
            )

    def reset(self):
        for probe in self._busy_probes:
            if probe():
                raise InFlightError("cannot reset ledger while a job is pending")
        with self._lock:
            self._zero()


class TrustedState:
    """Default container for trusted-side application state."""

    def __init__(self):
        self.memo_vault: dict[int, int] = {}
        self.kv: dict = {}


class TrustedRegion:
    """State reachable only from the worker context or inside a simulated ecall.

    Ownership is enforced with thread-identity checks: reading `state` from
    any other context raises BoundaryViolation. This is an assertion-based
    simulation of isolation, not a security boundary.
    """

    def __init__(self, ledger: TransitionLedger, state=None):
        self.ledger = ledger
        self._state = state if state is not None else TrustedState()
        self._worker_thread: int | None = None
        self._ecall_thread: int | None = None

    @property
    def state(self):
        ident = threading.get_ident()
        if ident != self._worker_thread and ident != self._ecall_thread:
            raise BoundaryViolation("trusted state accessed outside worker context or simulated ecall")
        return self._state

    def in_trusted_context(self) -> bool:
        ident = threading.get_ident()
        return ident == self._worker_thread or ident == self._ecall_thread

    def simulate_ecall(self, body):
        """Run `body(state)` as one full boundary transition."""
        ident = threading.get_ident()
        if ident == self._ecall_thread:
            raise BoundaryViolation("nested simulate_ecall from trusted context")
        if self._worker_thread is not None:
            raise BoundaryViolation("a worker owns the trusted state; use the channel instead")
        self.ledger.record_ecall()
        self._ecall_thread = ident
        try:
            return body(self._state)
        finally:
            self._ecall_thread = None

    # Worker attachment; used by the channel module.
    def _attach_worker(self):
        if self._worker_thread is not None:
            raise BoundaryViolation("trusted region already owned by a worker")
        self._worker_thread = threading.get_ident()

    def _detach_worker(self):
        self._worker_thread = None
