"""Seeded random flowsets."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .network import MAX_PAYLOAD, MIN_PAYLOAD, Flow, ModelError, Network


@dataclass(frozen=True)
class GenParams:
    count: int
    seed: int = 0
    period_range: tuple[int, int] = (500, 100_000)
    deadline_range: tuple[int, int] = (500, 100_000)
    size_range: tuple[int, int] = (64, 1500)
    constrained: bool = False  # force deadline <= period

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be >= 1")
        for lo, hi in (self.period_range, self.deadline_range, self.size_range):
            if not 0 < lo <= hi:
                raise ValueError(f"empty or non-positive range ({lo}, {hi})")


def generate(network: Network, params: GenParams) -> list[Flow]:
    """Uniformly random flows between distinct end-points.

    Periods, deadlines and sizes are drawn independently and uniformly as
    integers (microseconds, bytes) from their ranges; sizes are clipped to the
    valid payload range.
    """
    eps = network.end_points
    if len(eps) < 2:
        raise ModelError("need at least two end-points")
    rng = np.random.default_rng(params.seed)
    lo_s = max(params.size_range[0], MIN_PAYLOAD)
    hi_s = min(params.size_range[1], MAX_PAYLOAD)
    flows = []
    width = len(str(params.count - 1))
    for n in range(params.count):
        src, dst = rng.choice(len(eps), size=2, replace=False)
        period = int(rng.integers(params.period_range[0], params.period_range[1], endpoint=True))
        deadline = int(rng.integers(params.deadline_range[0], params.deadline_range[1], endpoint=True))
        if params.constrained:
            deadline = min(deadline, period)
        size = int(rng.integers(lo_s, hi_s, endpoint=True))
        flows.append(Flow(f"f{n:0{width}d}", eps[int(src)], eps[int(dst)],
                          Fraction(period), Fraction(deadline), size))
    return flows
