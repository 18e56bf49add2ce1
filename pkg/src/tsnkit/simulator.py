"""Discrete-event simulation of strict-priority ports with multi-level preemption.

Time is kept in integer ticks (a fixed fraction of a microsecond chosen so
that every byte time, period and phase is integral), which keeps the
simulation exact and fast.  A frame in flight can be cut only once the
current fragment carries at least 84 bytes on the wire and at least 60 bytes
of its data remain; the continuation pays the 24-byte preemption overhead.
Within one preemption class frames are never interrupted, and a suspended
frame resumes before any other frame of its class.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import IO, Mapping, Sequence

import numpy as np

from .cpa import MIN_CONTINUATION, MIN_FRAME, PREEMPTION_OVERHEAD, format_us, wire_bytes
from .network import Flow, ModelError, Network, Path, PreemptionConfig, flow_classes, validate_config

logger = logging.getLogger(__name__)

MIN_TICKS_PER_US = 1000

_PREEMPT, _COMPLETE, _ARRIVE = 0, 1, 2


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    horizon: Fraction = Fraction(0)  # 0 means 100 x the largest period
    phases: str | Mapping[str, Fraction] = "random"  # "random", "zero" or explicit per flow
    switch_delay: Fraction = Fraction(0)


@dataclass
class FlowStats:
    released: int = 0
    delivered: int = 0
    delivered_by_horizon: int = 0
    max_delay: Fraction = Fraction(0)
    total_delay: Fraction = Fraction(0)
    deadline_misses: int = 0
    preemptions_suffered: int = 0
    preemptions_caused: int = 0

    @property
    def mean_delay(self) -> Fraction:
        return self.total_delay / self.delivered if self.delivered else Fraction(0)

    @property
    def in_flight_at_horizon(self) -> int:
        return self.released - self.delivered_by_horizon


@dataclass(frozen=True)
class SimReport:
    flows: dict[str, FlowStats]
    events: int
    horizon: Fraction
    seed: int

    def __getitem__(self, flow_id: str) -> FlowStats:
        return self.flows[flow_id]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "horizon_us": format_us(self.horizon),
            "events": self.events,
            "flows": {
                fid: {
                    "max_delay_us": format_us(s.max_delay),
                    "mean_delay_us": format_us(s.mean_delay),
                    "released": s.released,
                    "delivered": s.delivered,
                    "in_flight_at_horizon": s.in_flight_at_horizon,
                    "deadline_misses": s.deadline_misses,
                    "preemptions_suffered": s.preemptions_suffered,
                    "preemptions_caused": s.preemptions_caused,
                }
                for fid, s in sorted(self.flows.items())
            },
        }


@dataclass(eq=False)
class _Frame:
    flow: int
    q: int
    release: int
    hop: int = 0
    raw_left: int = 0
    resumed: bool = False


@dataclass(eq=False)
class _Port:
    name: tuple[str, str]
    byte_ticks: int
    queues: dict[int, deque] = field(default_factory=dict)
    suspended: dict[int, _Frame] = field(default_factory=dict)
    current: _Frame | None = None
    frag_start: int = 0
    frag_overhead: int = 0
    frag_raw: int = 0
    preempt_at: int | None = None
    preempted_by_pending: bool = False
    version: int = 0


class Simulator:
    def __init__(
        self,
        network: Network,
        flows: Sequence[Flow],
        routes: Mapping[str, Path],
        config: PreemptionConfig,
        sim_config: SimConfig = SimConfig(),
        trace: IO[str] | None = None,
    ) -> None:
        flows = sorted(flows, key=lambda f: f.id)
        if not flows:
            raise ModelError("nothing to simulate")
        check = validate_config(flows, config)
        if not check.ok:
            raise ModelError(f"invalid configuration {list(config.entries)}")
        for f in flows:
            if f.id not in routes or not len(routes[f.id]):
                raise ModelError(f"flow {f.id!r} has no route")
        self.network = network
        self.flows = flows
        self.routes = [list(routes[f.id]) for f in flows]
        classes = flow_classes(flows, config)
        self.pclass = [classes[f.id] for f in flows]
        self.prio = [f.priority for f in flows]
        self.sim_config = sim_config
        self.trace = trace

        max_period = max(f.period for f in flows)
        horizon = Fraction(sim_config.horizon) or 100 * max_period
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        if horizon < 10 * max_period:
            raise ModelError("horizon must cover at least 10 periods of every flow")
        if horizon < 100 * max_period:
            logger.warning("horizon below 100 x the largest period")
        self.horizon = horizon

        used = {l for r in self.routes for l in r}
        scale = MIN_TICKS_PER_US
        for link in used:
            r = network.rate(link)
            scale = math.lcm(scale, r.numerator // math.gcd(r.numerator, 8 * r.denominator))
        for f in flows:
            scale = math.lcm(scale, f.period.denominator)
        scale = math.lcm(scale, Fraction(sim_config.switch_delay).denominator)
        self.scale = scale
        self.ports = {
            link: _Port(link, int(Fraction(8 * scale) / network.rate(link))) for link in sorted(used)
        }
        self.switch_delay = int(Fraction(sim_config.switch_delay) * scale)
        self.period = [int(f.period * scale) for f in flows]
        self.deadline = [f.deadline for f in flows]
        self.wire = [wire_bytes(f.size) for f in flows]
        self.horizon_ticks = math.ceil(horizon * scale)
        self.phase = self._phases(sim_config)
        self.stats = [FlowStats() for _ in flows]
        self._heap: list = []
        self._seq = 0
        self.events = 0

    def _phases(self, cfg: SimConfig) -> list[int]:
        if cfg.phases == "zero":
            return [0] * len(self.flows)
        if cfg.phases == "random":
            rng = np.random.default_rng(cfg.seed)
            return [int(rng.integers(0, p)) for p in self.period]
        out = []
        for f, p in zip(self.flows, self.period):
            phase = Fraction(cfg.phases.get(f.id, 0)) * self.scale
            if phase.denominator != 1:
                raise ModelError(f"phase of {f.id!r} is finer than the simulation tick")
            out.append(int(phase))
        return out

    # --- event plumbing --------------------------------------------------------

    def _push(self, t: int, kind: int, port, frame: _Frame, version: int = 0) -> None:
        key = (t, kind, self.prio[frame.flow], self.pclass[frame.flow], frame.flow, frame.q, self._seq)
        self._seq += 1
        heapq.heappush(self._heap, (key, port, frame, version))

    def _log(self, t: int, port, event: str, frame: _Frame, detail=None) -> None:
        if self.trace is None:
            return
        rec = {"time_ns": round(t * 1000 / self.scale, 3), "port": list(port) if port else None,
               "event": event, "flow": self.flows[frame.flow].id, "q": frame.q, "detail": detail}
        self.trace.write(json.dumps(rec) + "\n")

    # --- main loop --------------------------------------------------------------

    def run(self) -> SimReport:
        for i in range(len(self.flows)):
            if self.phase[i] < self.horizon_ticks:
                self._release(i, 0)
        while self._heap:
            t = self._heap[0][0][0]
            touched = set()
            while self._heap and self._heap[0][0][0] == t:
                key, port, frame, version = heapq.heappop(self._heap)
                self.events += 1
                kind = key[1]
                if kind == _ARRIVE:
                    self._arrive(t, port, frame)
                    touched.add(port)
                elif self.ports[port].version != version:
                    continue  # stale
                elif kind == _COMPLETE:
                    self._complete(t, port)
                    touched.add(port)
                else:
                    self._preempt(t, port)
                    touched.add(port)
            for port in sorted(touched):
                self._dispatch(t, port)
        return SimReport(
            {f.id: s for f, s in zip(self.flows, self.stats)}, self.events, self.horizon,
            self.sim_config.seed,
        )

    def _release(self, i: int, q: int) -> None:
        t = self.phase[i] + q * self.period[i]
        frame = _Frame(i, q + 1, t)
        self._push(t, _ARRIVE, self.routes[i][0], frame)

    def _arrive(self, t: int, link, frame: _Frame) -> None:
        i = frame.flow
        if frame.hop == 0:
            self.stats[i].released += 1
            self._log(t, None, "release", frame)
            nxt = frame.q * self.period[i] + self.phase[i]
            if nxt < self.horizon_ticks:
                self._release(i, frame.q)
        port = self.ports[link]
        frame.raw_left = self.wire[i] * port.byte_ticks
        frame.resumed = False
        port.queues.setdefault(self.prio[i], deque()).append(frame)
        self._log(t, link, "enqueue", frame)

    def _start(self, t: int, port: _Port, frame: _Frame) -> None:
        port.current = frame
        port.frag_start = t
        port.frag_overhead = PREEMPTION_OVERHEAD * port.byte_ticks if frame.resumed else 0
        port.frag_raw = frame.raw_left
        port.preempt_at = None
        port.version += 1
        self._push(t + port.frag_overhead + frame.raw_left, _COMPLETE, port.name, frame, port.version)
        self._log(t, port.name, "resume" if frame.resumed else "start", frame)

    def _complete(self, t: int, link) -> None:
        port = self.ports[link]
        frame = port.current
        port.current = None
        port.version += 1
        frame.raw_left = 0
        self._log(t, link, "complete", frame)
        i = frame.flow
        frame.hop += 1
        if frame.hop < len(self.routes[i]):
            self._push(t + self.switch_delay, _ARRIVE, self.routes[i][frame.hop], frame)
            return
        delay = Fraction(t - frame.release, self.scale)
        s = self.stats[i]
        s.delivered += 1
        if t <= self.horizon_ticks:
            s.delivered_by_horizon += 1
        s.total_delay += delay
        s.max_delay = max(s.max_delay, delay)
        if delay > self.deadline[i]:
            s.deadline_misses += 1
        self._log(t, None, "deliver", frame, str(delay))

    def _preempt(self, t: int, link) -> None:
        port = self.ports[link]
        frame = port.current
        sent_raw = t - port.frag_start - port.frag_overhead
        frame.raw_left = port.frag_raw - sent_raw
        frame.resumed = True
        port.suspended[self.pclass[frame.flow]] = frame
        port.current = None
        port.version += 1
        self.stats[frame.flow].preemptions_suffered += 1
        self._log(t, link, "preempt", frame, {"raw_ticks_left": frame.raw_left})

    def _best_queued(self, port: _Port) -> _Frame | None:
        for prio in sorted(port.queues):
            if port.queues[prio]:
                return port.queues[prio][0]
        return None

    def _dispatch(self, t: int, link) -> None:
        port = self.ports[link]
        head = self._best_queued(port)
        if port.current is None:
            susp = min(port.suspended, default=None)
            if susp is not None and (head is None or susp <= self.pclass[head.flow]):
                frame = port.suspended.pop(susp)
            elif head is not None:
                frame = port.queues[self.prio[head.flow]].popleft()
                if port.preempted_by_pending:
                    self.stats[frame.flow].preemptions_caused += 1
                    port.preempted_by_pending = False
            else:
                return
            self._start(t, port, frame)
            return
        if head is None or port.preempt_at is not None:
            return
        if self.pclass[head.flow] >= self.pclass[port.current.flow]:
            return
        bt = port.byte_ticks
        sent = max(MIN_FRAME * bt, t - port.frag_start)
        left = port.frag_raw - (sent - port.frag_overhead)
        if left < MIN_CONTINUATION * bt:
            return  # the rest of this fragment is not preemptable
        port.preempt_at = port.frag_start + sent
        port.preempted_by_pending = True
        self._push(port.preempt_at, _PREEMPT, link, port.current, port.version)


def simulate(
    network: Network,
    flows: Sequence[Flow],
    routes: Mapping[str, Path],
    config: PreemptionConfig,
    sim_config: SimConfig = SimConfig(),
    trace: IO[str] | None = None,
) -> SimReport:
    return Simulator(network, flows, routes, config, sim_config, trace).run()
