"""Search for the smallest preemption level that makes a flowset schedulable."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb, factorial
from typing import Mapping, Sequence

from .analysis import analyze
from .network import Flow, Network, Path, PreemptionConfig, distinct_priorities


@dataclass(frozen=True)
class ConfigSet:
    level: int
    configs: tuple[PreemptionConfig, ...]

    def __len__(self) -> int:
        return len(self.configs)

    def __iter__(self):
        return iter(self.configs)

    def entries(self) -> list[list[int]]:
        return [list(c.entries) for c in self.configs]


def _check(p: int, m: int) -> None:
    if p < 1:
        raise ValueError("need at least one priority")
    if not 0 <= m <= p - 1:
        raise ValueError(f"level {m} impossible with {p} priorities")


def valid_configs(p: int, m: int) -> ConfigSet:
    """All non-decreasing sequences of length p that use every class 0..m.

    Such a sequence is fixed by the ranks where the class steps up by one,
    so the configurations correspond to the m-subsets of {1..p-1}.
    """
    _check(p, m)
    configs = []
    for steps in combinations(range(1, p), m):
        entries, cls = [], 0
        cut = set(steps)
        for r in range(p):
            if r in cut:
                cls += 1
            entries.append(cls)
        configs.append(PreemptionConfig(m, tuple(entries)))
    configs.sort(key=lambda c: c.entries)
    return ConfigSet(m, tuple(configs))


def config_count(p: int, m: int) -> int:
    _check(p, m)
    return comb(p - 1, m)


def closed_form_config_count(k: int, m: int) -> int | None:
    """The closed form (k-1)! / ((k-m)! (m-1)!) as printed; defined for 1 <= m <= k."""
    if not 1 <= m <= k:
        return None
    return factorial(k - 1) // (factorial(k - m) * factorial(m - 1))


def total_search_size(p: int) -> int:
    if p < 1:
        raise ValueError("need at least one priority")
    return sum(config_count(p, m) for m in range(1, p))


@dataclass(frozen=True)
class LevelStats:
    level: int
    tested: int
    passed: int


@dataclass(frozen=True)
class SynthesisResult:
    config: PreemptionConfig | None
    configs_tested: int
    levels: tuple[LevelStats, ...] = ()

    @property
    def found(self) -> bool:
        return self.config is not None

    @property
    def level(self) -> int | None:
        return None if self.config is None else self.config.level

    def to_dict(self) -> dict:
        return {
            "outcome": "found" if self.found else "unschedulable",
            "level": self.level,
            "config": None if self.config is None else list(self.config.entries),
            "configs_tested": self.configs_tested,
            "levels": [{"level": s.level, "tested": s.tested, "passed": s.passed} for s in self.levels],
        }


class _Oracle:
    """Memoised schedulability test for one flowset."""

    def __init__(self, network, flows, routes) -> None:
        self.network, self.flows, self.routes = network, flows, routes
        self._cache: dict[tuple[int, ...], bool] = {}

    def __call__(self, config: PreemptionConfig) -> bool:
        key = config.entries
        if key not in self._cache:
            report = analyze(self.network, self.flows, self.routes, config, abort_on_deadline=True)
            self._cache[key] = report.schedulable
        return self._cache[key]


def assign_preemption_class(
    network: Network, flows: Sequence[Flow], routes: Mapping[str, Path]
) -> SynthesisResult:
    """First schedulable configuration at the lowest preemption level."""
    flows = list(flows)
    p = len(distinct_priorities(flows))
    oracle = _Oracle(network, flows, routes)
    tested, levels = 0, []
    for m in range(p):
        n = 0
        for config in valid_configs(p, m):
            n += 1
            tested += 1
            if oracle(config):
                levels.append(LevelStats(m, n, 1))
                return SynthesisResult(config, tested, tuple(levels))
        levels.append(LevelStats(m, n, 0))
    return SynthesisResult(None, tested, tuple(levels))


def schedulable_levels(
    network: Network, flows: Sequence[Flow], routes: Mapping[str, Path]
) -> dict[int, list[PreemptionConfig]]:
    """Exhaustive table of schedulable configurations per level."""
    flows = list(flows)
    p = len(distinct_priorities(flows))
    oracle = _Oracle(network, flows, routes)
    return {m: [c for c in valid_configs(p, m) if oracle(c)] for m in range(p)}
