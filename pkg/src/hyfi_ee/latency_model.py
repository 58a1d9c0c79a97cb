"""
End-to-end latency composition and the M/M/1 waiting-time model.

Total latency is the sum of queue waiting, transmission, channel access,
backhaul, packet reception, and processing times.  None of the components
depends on the precoders once the transmission time is fixed, so the
per-slice latency ceiling acts as a pre-solve feasibility gate for the
optimizer rather than a solver constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .rate_model import Slice, SLICE_LATENCY_MAX_S

# Fixed delay components used in the experiments (seconds):
# access + backhaul = 0.1 ms, reception + processing = 0.3 ms.
DEFAULT_ACCESS_S = 0.05e-3
DEFAULT_BACKHAUL_S = 0.05e-3
DEFAULT_RECEPTION_S = 0.15e-3
DEFAULT_PROCESSING_S = 0.15e-3
DEFAULT_WAIT_S = 0.5e-3


@dataclass(frozen=True)
class LatencyBudget:
    """The six latency components of one transmission (seconds)."""

    wait_s: float = DEFAULT_WAIT_S
    tx_s: float = 0.05e-3
    access_s: float = DEFAULT_ACCESS_S
    backhaul_s: float = DEFAULT_BACKHAUL_S
    reception_s: float = DEFAULT_RECEPTION_S
    processing_s: float = DEFAULT_PROCESSING_S

    def __post_init__(self):
        for name in ("wait_s", "tx_s", "access_s", "backhaul_s",
                     "reception_s", "processing_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"latency component {name} must be >= 0")

    def with_tx_time(self, tx_s: float) -> "LatencyBudget":
        return replace(self, tx_s=tx_s)


def mm1_wait(service_rate_hz: float, arrival_rate_hz: float) -> float:
    """Mean M/M/1 waiting time 1/(mu - lambda); requires a stable queue."""
    if arrival_rate_hz < 0:
        raise ValueError("arrival rate must be >= 0")
    if service_rate_hz <= arrival_rate_hz:
        raise ValueError("unstable queue: service rate must exceed arrival rate")
    return 1.0 / (service_rate_hz - arrival_rate_hz)


def service_rate_from_throughput(rate_nats_s: float, packet_bits: float) -> float:
    """Packets/s a link sustains: (rate/ln 2) bits/s over the packet size."""
    if packet_bits <= 0:
        raise ValueError("packet_bits must be positive")
    return rate_nats_s / math.log(2.0) / packet_bits


def total_latency(budget: LatencyBudget) -> float:
    """Sum of the six components (seconds)."""
    return (budget.wait_s + budget.tx_s + budget.access_s + budget.backhaul_s
            + budget.reception_s + budget.processing_s)


def check_latency(slice_: Slice, budget: LatencyBudget,
                  latency_max_s: float | None = None) -> bool:
    """True when the composed latency meets the slice ceiling (upper bound)."""
    if latency_max_s is None:
        latency_max_s = SLICE_LATENCY_MAX_S[slice_]
    return total_latency(budget) <= latency_max_s
