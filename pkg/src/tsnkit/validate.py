"""Cross-check analytic bounds against simulated delays."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

from .analysis import UNSCHEDULABLE, analyze
from .network import Flow, Network, Path, PreemptionConfig
from .simulator import SimConfig, SimReport, simulate


def worker_count() -> int:
    """Parallelism cap from ``TSNKIT_THREADS`` (default 1, i.e. sequential)."""
    try:
        return max(1, int(os.environ.get("TSNKIT_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn: Callable, items: Iterable) -> list:
    """``map`` that may fan out to processes; results keep input order."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class FlowMargin:
    flow_id: str
    mwctt: Fraction
    wctt: Fraction | None  # None when the analysis found no bound
    worst_seed: int
    note: str = ""

    @property
    def margin(self) -> Fraction | None:
        return None if self.wctt is None else self.wctt - self.mwctt

    @property
    def violated(self) -> bool:
        return self.wctt is not None and self.mwctt > self.wctt


@dataclass(frozen=True)
class ValidationReport:
    config: PreemptionConfig
    flows: dict[str, FlowMargin]
    seeds: tuple[int, ...]

    @property
    def violations(self) -> list[FlowMargin]:
        return [m for _, m in sorted(self.flows.items()) if m.violated]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __getitem__(self, flow_id: str) -> FlowMargin:
        return self.flows[flow_id]


def _run(args) -> SimReport:
    network, flows, routes, config, sim_config = args
    return simulate(network, flows, routes, config, sim_config)


def cross_validate(
    network: Network,
    flows: Sequence[Flow],
    routes: Mapping[str, Path],
    config: PreemptionConfig,
    sim_config: SimConfig = SimConfig(),
    runs: int = 1,
) -> ValidationReport:
    """Worst simulated delay against the analytic bound, per flow.

    Runs ``runs`` simulations with seeds ``sim_config.seed``,
    ``sim_config.seed + 1``, ...; the seed of the worst run is kept so a
    violation can be replayed with a trace.  Flows without an analytic bound
    are kept with ``wctt=None`` and a note.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    flows = list(flows)
    analysis = analyze(network, flows, routes, config, switch_delay=sim_config.switch_delay)
    seeds = tuple(sim_config.seed + r for r in range(runs))
    jobs = [(network, flows, routes, config, replace(sim_config, seed=s)) for s in seeds]
    reports = parallel_map(_run, jobs)
    out = {}
    for f in flows:
        worst, worst_seed = Fraction(-1), seeds[0]
        for seed, rep in zip(seeds, reports):
            if rep[f.id].max_delay > worst:
                worst, worst_seed = rep[f.id].max_delay, seed
        fr = analysis[f.id]
        if fr.status == UNSCHEDULABLE:
            out[f.id] = FlowMargin(f.id, worst, None, worst_seed, f"excluded: {fr.reason}")
        else:
            out[f.id] = FlowMargin(f.id, worst, fr.total, worst_seed)
    return ValidationReport(config, out, seeds)
