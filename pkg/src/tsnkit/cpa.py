"""Event models and frame timing primitives.

All durations are exact ``Fraction`` values in microseconds; link rates are
in bits per microsecond (numerically equal to Mbit/s).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

#: per-frame protocol overhead and minimum payload, in bytes
FRAME_OVERHEAD = 42
MIN_FRAME = 84
#: longest fragment that cannot be preempted
MAX_NON_PREEMPTABLE = 143
#: cost of one preemption: continuation header, MCRC and the extra inter-frame gap
PREEMPTION_OVERHEAD = 24
#: minimum payload of a non-initial fragment
MIN_CONTINUATION = 60


@dataclass(frozen=True)
class EventModel:
    period: Fraction
    jitter: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")


def eta_plus(model: EventModel, dt) -> int:
    """Maximum number of activations in any closed window of length ``dt``."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return math.floor((dt + model.jitter) / model.period) + 1


def eta_minus(model: EventModel, dt) -> int:
    if dt < 0:
        raise ValueError("dt must be non-negative")
    return max(0, math.ceil((dt - model.jitter) / model.period) - 1)


def delta_minus(model: EventModel, q: int) -> Fraction:
    """Earliest time of the q-th activation relative to the first."""
    if q < 1:
        raise ValueError("q must be >= 1")
    return max(Fraction(0), (q - 1) * Fraction(model.period) - model.jitter)


def delta_plus(model: EventModel, q: int) -> Fraction:
    if q < 1:
        raise ValueError("q must be >= 1")
    return (q - 1) * Fraction(model.period) + model.jitter


def frame_time(n_bytes: int, rate) -> Fraction:
    if n_bytes < 0 or rate <= 0:
        raise ValueError("need n_bytes >= 0 and rate > 0")
    return Fraction(8 * n_bytes) / Fraction(rate)


def wire_bytes(payload: int) -> int:
    return FRAME_OVERHEAD + max(FRAME_OVERHEAD, payload)


def transmission_time(payload: int, rate) -> Fraction:
    """Time to send a frame with the given payload, overheads included."""
    if payload < 0:
        raise ValueError("payload must be non-negative")
    return frame_time(wire_bytes(payload), rate)


def max_fragments(payload: int) -> int:
    """Upper bound on how often a frame with this payload can be preempted."""
    if payload < FRAME_OVERHEAD:
        raise ValueError(f"payload {payload} below the {FRAME_OVERHEAD}-byte minimum")
    return (payload - FRAME_OVERHEAD) // MIN_CONTINUATION


def propagate_event_model(model: EventModel, wctt_plus, best_case) -> EventModel:
    if not wctt_plus >= best_case >= 0:
        raise ValueError("need wctt_plus >= best_case >= 0")
    return EventModel(model.period, model.jitter + (Fraction(wctt_plus) - Fraction(best_case)))


def format_us(value) -> str:
    """Exact decimal rendering with 3 places, rounding half to even."""
    scaled = round(Fraction(value) * 1000)
    sign = "-" if scaled < 0 else ""
    whole, frac = divmod(abs(scaled), 1000)
    return f"{sign}{whole}.{frac:03d}"
