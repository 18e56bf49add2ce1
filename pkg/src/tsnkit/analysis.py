"""Worst-case traversal time analysis for multi-level frame preemption.

Each egress port is analysed as a resource in the CPA sense: for a flow
``i`` we iterate over the activations ``q`` of its level-i busy window,
solve the queuing delay fixed point for each and take the worst traversal
time.  Per-hop results are chained with jitter propagation until the event
models of every hop stop changing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .cpa import (
    MAX_NON_PREEMPTABLE,
    MIN_FRAME,
    PREEMPTION_OVERHEAD,
    EventModel,
    delta_minus,
    eta_plus,
    frame_time,
    max_fragments,
    transmission_time,
)
from .network import (
    Flow,
    FlowClassKind,
    LinkId,
    ModelError,
    Network,
    Path,
    PreemptionConfig,
    class_kind,
    egress_port_flowsets,
    flow_classes,
    validate_config,
)

logger = logging.getLogger(__name__)

MAX_FIXED_POINT_STEPS = 10**6
MAX_ACTIVATIONS = 10**4
MAX_ROUNDS = 500
ZERO = Fraction(0)


class Unschedulable(Exception):
    """No bound within budget: ``reason`` is 'deadline', 'overload' or 'divergent'."""

    def __init__(self, reason: str, detail: str = "") -> None:
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason
        self.detail = detail


@dataclass(frozen=True)
class PortFlow:
    """A flow as seen by one egress port."""

    flow: Flow
    model: EventModel
    c: Fraction
    fragments: int
    pclass: int
    kind: FlowClassKind

    @property
    def id(self) -> str:
        return self.flow.id

    @property
    def priority(self) -> int:
        return self.flow.priority

    @property
    def preemptable(self) -> bool:
        return self.kind is not FlowClassKind.EXPRESS


@dataclass(frozen=True)
class PortAnalysisContext:
    rate: Fraction
    flows: tuple[PortFlow, ...]
    level: int

    @classmethod
    def build(
        cls,
        rate,
        flows: Sequence[tuple[Flow, EventModel]],
        classes: Mapping[str, int],
        level: int,
    ) -> "PortAnalysisContext":
        rate = Fraction(rate)
        entries = tuple(
            PortFlow(f, m, transmission_time(f.size, rate), max_fragments(f.size),
                     classes[f.id], class_kind(classes[f.id], level))
            for f, m in flows
        )
        return cls(rate, entries, level)

    def entry(self, flow) -> PortFlow:
        fid = flow if isinstance(flow, str) else flow.id
        for e in self.flows:
            if e.id == fid:
                return e
        raise KeyError(fid)

    def hp(self, e: PortFlow) -> list[PortFlow]:
        return [j for j in self.flows if j.priority < e.priority]

    def lp(self, e: PortFlow) -> list[PortFlow]:
        return [j for j in self.flows if j.priority > e.priority]

    def sp(self, e: PortFlow) -> list[PortFlow]:
        return [j for j in self.flows if j.priority == e.priority and j.id != e.id]

    def completion_term(self, e: PortFlow) -> Fraction:
        """Non-preemptable tail of a frame once its last fragment has started."""
        return e.c if e.kind is FlowClassKind.EXPRESS else frame_time(MIN_FRAME, self.rate)


@dataclass(frozen=True)
class FrameInstance:
    flow_id: str
    q: int
    arrival: Fraction

    @classmethod
    def critical(cls, e: PortFlow, q: int) -> "FrameInstance":
        # every frame arrives as early as its event model allows
        return cls(e.id, q, delta_minus(e.model, q))


def _max(values) -> Fraction:
    return max(values, default=ZERO)


def lower_priority_blocking(flow, ctx: PortAnalysisContext) -> Fraction:
    e = ctx.entry(flow)
    same_class = _max(j.c for j in ctx.lp(e) if j.pclass == e.pclass)
    if e.kind is FlowClassKind.BP:
        return same_class
    if e.kind is FlowClassKind.EXPRESS:
        lower_class = _max(j.c for j in ctx.flows if j.preemptable)
    else:
        lower_class = _max(j.c for j in ctx.flows if j.pclass > e.pclass)
    return max(same_class, min(lower_class, frame_time(MAX_NON_PREEMPTABLE, ctx.rate)))


def same_priority_blocking(flow, instance: FrameInstance, ctx: PortAnalysisContext) -> Fraction:
    e = ctx.entry(flow)
    a = instance.arrival
    total = sum((eta_plus(j.model, a) * j.c for j in ctx.sp(e)), ZERO)
    total += (instance.q - 1) * e.c
    if e.preemptable:
        # all but the final fragment of the frame itself
        total += max(ZERO, e.c - frame_time(MIN_FRAME, ctx.rate))
    return total


def higher_priority_interference(flow, dt, ctx: PortAnalysisContext) -> Fraction:
    e = ctx.entry(flow)
    return sum((eta_plus(j.model, dt) * j.c for j in ctx.hp(e)), ZERO)


def preemption_count_bound(flow, instance: FrameInstance, dt, ctx: PortAnalysisContext) -> int:
    """Upper bound on preemptions suffered by preemptable frames sent in the window."""
    e = ctx.entry(flow)
    a = instance.arrival
    n_lp = max((j.fragments for j in ctx.lp(e) if j.pclass == e.pclass), default=0)
    n_sp = instance.q * e.fragments + sum(eta_plus(j.model, a) * j.fragments for j in ctx.sp(e))
    n_hp = sum(eta_plus(j.model, dt) * j.fragments for j in ctx.hp(e) if j.preemptable)
    return n_lp + n_sp + n_hp


def preemption_overhead(flow, instance: FrameInstance, dt, ctx: PortAnalysisContext) -> Fraction:
    e = ctx.entry(flow)
    if not e.preemptable:
        return ZERO
    arrivals = sum(eta_plus(j.model, dt) for j in ctx.flows if j.pclass < e.pclass)
    if arrivals == 0:
        return ZERO
    count = min(arrivals, preemption_count_bound(e, instance, dt, ctx))
    return count * frame_time(PREEMPTION_OVERHEAD, ctx.rate)


def queuing_delay(
    flow,
    instance: FrameInstance,
    ctx: PortAnalysisContext,
    budget: Fraction | None = None,
    history: list[Fraction] | None = None,
) -> Fraction:
    """Least fixed point of the queuing delay for one frame instance.

    ``budget`` bounds the traversal time at this hop; exceeding it raises
    :class:`Unschedulable` with reason ``'deadline'``.  ``history``, when
    given, receives every iterate.
    """
    e = ctx.entry(flow)
    a = instance.arrival
    base = lower_priority_blocking(e, ctx) + same_priority_blocking(e, instance, ctx)
    tail = ctx.completion_term(e)

    def step(q_delay: Fraction) -> Fraction:
        return (base + higher_priority_interference(e, q_delay, ctx)
                + preemption_overhead(e, instance, q_delay, ctx))

    # base is below the least fixed point, so iterates only grow
    current = base
    for _ in range(MAX_FIXED_POINT_STEPS):
        if history is not None:
            history.append(current)
        if budget is not None and current + tail - a > budget:
            raise Unschedulable("deadline", f"{e.id} q={instance.q} exceeds {budget}us")
        nxt = step(current)
        if nxt == current:
            return current
        current = nxt
    raise Unschedulable("divergent", f"{e.id} q={instance.q}: fixed point did not converge")


def hep_utilization(e: PortFlow, ctx: PortAnalysisContext) -> Fraction:
    load = sum((j.c / j.model.period for j in ctx.flows if j.priority <= e.priority), ZERO)
    if e.preemptable:
        po = frame_time(PREEMPTION_OVERHEAD, ctx.rate)
        load += sum((po / j.model.period for j in ctx.flows if j.pclass < e.pclass), ZERO)
    return load


@dataclass(frozen=True)
class LocalBound:
    wctt: Fraction
    q_max: int


def busy_window(flow, ctx: PortAnalysisContext) -> Fraction:
    """Upper bound on the length of a level-i busy window at this port.

    All frames of priority <= i arriving in the closed window are counted in
    full, after the initial lower-priority blocker.  Preemptable flows add the
    overhead of at most one preemption per higher-class arrival, capped by
    the fragments that can be cut inside the window.
    """
    e = ctx.entry(flow)
    lpb = lower_priority_blocking(e, ctx)
    hep = [j for j in ctx.flows if j.priority <= e.priority]
    po = frame_time(PREEMPTION_OVERHEAD, ctx.rate)
    n_lp = max((j.fragments for j in ctx.lp(e) if j.pclass == e.pclass), default=0)

    def step(w: Fraction) -> Fraction:
        total = lpb + sum((eta_plus(j.model, w) * j.c for j in hep), ZERO)
        if e.preemptable:
            arrivals = sum(eta_plus(j.model, w) for j in ctx.flows if j.pclass < e.pclass)
            cuts = n_lp + sum(eta_plus(j.model, w) * j.fragments for j in hep if j.preemptable)
            total += min(arrivals, cuts) * po
        return total

    current = step(ZERO)
    for _ in range(MAX_FIXED_POINT_STEPS):
        nxt = step(current)
        if nxt == current:
            return current
        current = nxt
    raise Unschedulable("divergent", f"{e.id}: busy window did not converge")


def candidate_arrivals(e: PortFlow, ctx: PortAnalysisContext, lo: Fraction, hi: Fraction,
                       horizon: Fraction) -> list[Fraction]:
    """Arrival offsets in ``[lo, hi)`` (and at most ``horizon``) worth examining.

    Same-priority frames are served FIFO, so the queuing delay depends on the
    arrival offset only through the step functions eta_j(a) of same-priority
    flows.  Between two steps the delay is constant while the traversal time
    falls with ``a``, so the left end of every step is enough.
    """
    out = {lo}
    for j in ctx.sp(e):
        t, jit = j.model.period, j.model.jitter
        n = (lo + jit) // t + 1  # first step strictly after lo
        a = n * t - jit
        while a < hi and a <= horizon:
            out.add(a)
            a += t
    return sorted(out)


def wctt_local(flow, ctx: PortAnalysisContext, budget: Fraction | None = None) -> LocalBound:
    """Worst traversal time at one port over every instance of the busy window."""
    e = ctx.entry(flow)
    if hep_utilization(e, ctx) >= 1:
        raise Unschedulable("overload", f"{e.id}: level-{e.priority} load >= 1")
    window = busy_window(e, ctx)
    tail = ctx.completion_term(e)
    worst = ZERO
    for q in range(1, MAX_ACTIVATIONS + 1):
        lo = delta_minus(e.model, q)
        if q > 1 and lo > window:
            return LocalBound(worst, q - 1)
        hi = delta_minus(e.model, q + 1)
        for a in candidate_arrivals(e, ctx, lo, hi, window):
            inst = FrameInstance(e.id, q, a)
            delay = queuing_delay(e, inst, ctx, budget)
            worst = max(worst, delay + tail - a)
    raise Unschedulable("divergent", f"{e.id}: busy window longer than {MAX_ACTIVATIONS} activations")


# --- network-level analysis ----------------------------------------------------

SCHEDULABLE = "schedulable"
DEADLINE_MISS = "deadline-miss"
UNSCHEDULABLE = "unschedulable"


@dataclass(frozen=True)
class HopBound:
    link: LinkId
    wctt: Fraction
    q_max: int


@dataclass(frozen=True)
class FlowReport:
    flow_id: str
    deadline: Fraction
    status: str
    hops: tuple[HopBound, ...] = ()
    reason: str = ""

    @property
    def total(self) -> Fraction | None:
        if self.status == UNSCHEDULABLE:
            return None
        return sum((h.wctt for h in self.hops), ZERO)

    @property
    def slack(self) -> Fraction | None:
        t = self.total
        return None if t is None else self.deadline - t

    @property
    def schedulable(self) -> bool:
        return self.status == SCHEDULABLE


@dataclass(frozen=True)
class WcttReport:
    config: PreemptionConfig
    flows: dict[str, FlowReport]
    rounds: int = 0

    @property
    def schedulable(self) -> bool:
        return all(r.schedulable for r in self.flows.values())

    @property
    def schedulable_count(self) -> int:
        return sum(r.schedulable for r in self.flows.values())

    def __getitem__(self, flow_id: str) -> FlowReport:
        return self.flows[flow_id]


def analyze(
    network: Network,
    flows: Sequence[Flow],
    routes: Mapping[str, Path],
    config: PreemptionConfig,
    *,
    abort_on_deadline: bool = False,
    switch_delay=0,
) -> WcttReport:
    """Per-hop and end-to-end bounds for every flow.

    With ``abort_on_deadline`` the analysis stops at the first flow whose
    bound exceeds its deadline; flows left undecided are reported as
    unschedulable.  Otherwise every flow with a finite bound gets it.
    """
    flows = list(flows)
    if not flows:
        return WcttReport(config, {})
    result = validate_config(flows, config)
    if not result.ok:
        raise ModelError(f"invalid configuration {list(config.entries)}: "
                         + "; ".join(f"{v.rule} {v.message}" for v in result.violations))
    switch_delay = Fraction(switch_delay)
    classes = flow_classes(flows, config)
    ports = egress_port_flowsets(network, flows, routes)
    by_id = {f.id: f for f in flows}
    hop_of = {(f.id, link): h for f in flows for h, link in enumerate(routes[f.id])}

    jitter = {(f.id, h): ZERO for f in flows for h in range(len(routes[f.id]))}
    bounds: dict[tuple[str, int], LocalBound] = {}
    failed: dict[str, str] = {}
    rounds = 0
    while True:
        rounds += 1
        new_bounds: dict[tuple[str, int], LocalBound] = {}
        for link in sorted(ports):
            members = ports[link]
            if any((f.id, hop_of[f.id, link]) not in jitter for f in members):
                # some upstream event model is unknown
                for f in members:
                    failed.setdefault(f.id, "tainted by a flow without a bound")
                continue
            ctx = PortAnalysisContext.build(
                network.rate(link),
                [(f, EventModel(f.period, jitter[f.id, hop_of[f.id, link]])) for f in members],
                classes, config.level,
            )
            for f in members:
                if f.id in failed:
                    continue
                h = hop_of[f.id, link]
                budget = None
                if abort_on_deadline:
                    upstream = sum((bounds[f.id, k].wctt for k in range(h) if (f.id, k) in bounds), ZERO)
                    budget = f.deadline - upstream
                try:
                    new_bounds[f.id, h] = wctt_local(f, ctx, budget)
                except Unschedulable as exc:
                    failed[f.id] = str(exc)
            if abort_on_deadline and failed:
                break

        new_jitter = {(f.id, 0): ZERO for f in flows}
        for f in flows:
            if f.id in failed:
                continue
            path = routes[f.id]
            for h, link in enumerate(list(path)[:-1]):
                b = new_bounds.get((f.id, h))
                if b is None:
                    break
                best = transmission_time(f.size, network.rate(link))
                new_jitter[f.id, h + 1] = new_jitter[f.id, h] + (b.wctt - best)
        bounds = new_bounds

        if abort_on_deadline and not failed:
            for f in flows:
                total = sum((bounds[f.id, h].wctt for h in range(len(routes[f.id]))
                             if (f.id, h) in bounds), ZERO)
                total += switch_delay * _switch_hops(network, routes[f.id])
                if total > f.deadline:
                    failed[f.id] = f"deadline: end-to-end bound exceeds {f.deadline}us"
        if abort_on_deadline and failed:
            break
        if new_jitter == jitter:
            break
        jitter = new_jitter
        if rounds >= MAX_ROUNDS:
            logger.warning("jitter propagation did not settle after %d rounds", rounds)
            for f in flows:
                failed.setdefault(f.id, "divergent: jitter propagation did not settle")
            break

    reports = {}
    for f in flows:
        path = list(routes[f.id])
        if f.id in failed or any((f.id, h) not in bounds for h in range(len(path))):
            reason = failed.get(f.id, "analysis aborted")
            reports[f.id] = FlowReport(f.id, f.deadline, UNSCHEDULABLE, reason=reason)
            continue
        hops = tuple(
            HopBound(link, bounds[f.id, h].wctt + (switch_delay if network.is_switch(link[0]) else 0),
                     bounds[f.id, h].q_max)
            for h, link in enumerate(path)
        )
        total = sum((x.wctt for x in hops), ZERO)
        status = SCHEDULABLE if total <= f.deadline else DEADLINE_MISS
        reports[f.id] = FlowReport(f.id, f.deadline, status, hops)
    return WcttReport(config, reports, rounds)


def _switch_hops(network: Network, path: Path) -> int:
    return sum(1 for link in path if network.is_switch(link[0]))


def wctt_end_to_end(
    flow,
    network: Network,
    routes: Mapping[str, Path],
    flows: Sequence[Flow],
    config: PreemptionConfig,
    *,
    abort_on_deadline: bool = True,
) -> Fraction:
    fid = flow if isinstance(flow, str) else flow.id
    report = analyze(network, flows, routes, config, abort_on_deadline=abort_on_deadline)[fid]
    if report.status == UNSCHEDULABLE:
        raise Unschedulable("deadline" if "deadline" in report.reason else "divergent", report.reason)
    if abort_on_deadline and report.status == DEADLINE_MISS:
        raise Unschedulable("deadline", f"{fid}: end-to-end bound exceeds deadline")
    return report.total


def is_schedulable(
    flows: Sequence[Flow],
    network: Network,
    routes: Mapping[str, Path],
    config: PreemptionConfig,
    *,
    abort_on_deadline: bool = False,
) -> WcttReport:
    """Schedulability verdicts; ``report.schedulable`` is the aggregate."""
    return analyze(network, flows, routes, config, abort_on_deadline=abort_on_deadline)
