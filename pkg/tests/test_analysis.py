from __future__ import annotations

from fractions import Fraction as F

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsnkit import topologies
from tsnkit.analysis import (
    DEADLINE_MISS,
    SCHEDULABLE,
    UNSCHEDULABLE,
    FrameInstance,
    PortAnalysisContext,
    Unschedulable,
    analyze,
    higher_priority_interference,
    is_schedulable,
    lower_priority_blocking,
    preemption_overhead,
    queuing_delay,
    same_priority_blocking,
    wctt_end_to_end,
    wctt_local,
)
from tsnkit.cpa import EventModel, delta_minus, frame_time, transmission_time
from tsnkit.network import Flow, PreemptionConfig, flow_classes, route_all
from tsnkit.simulator import SimConfig, simulate

from .helpers import direct_link, flow


def port(flows, config, jitter=None, rate=100):
    jitter = jitter or {}
    classes = flow_classes(flows, config)
    members = [(f, EventModel(f.period, F(jitter.get(f.id, 0)))) for f in flows]
    return PortAnalysisContext.build(F(rate), members, classes, config.level)


def first(ctx, fid, q=1):
    return FrameInstance.critical(ctx.entry(fid), q)


# --- lower-priority blocking ----------------------------------------------------

def test_lpb_express_against_long_preemptable_frames():
    flows = [flow("e", 200, 0), flow("b1", 1500, 1), flow("b2", 500, 1)]
    ctx = port(flows, PreemptionConfig.of([0, 1]))
    assert lower_priority_blocking("e", ctx) == F("11.44")


def test_lpb_tp_without_lower_priority_flows():
    flows = [flow("e", 200, 0), flow("t", 1500, 1), flow("b", 1500, 2)]
    ctx = port([flows[0], flows[1]], PreemptionConfig.of([0, 1]))
    assert lower_priority_blocking("t", ctx) == 0
    ctx3 = port(flows, PreemptionConfig.of([0, 1, 2]))
    assert lower_priority_blocking("b", ctx3) == 0


def test_lpb_express_short_preemptable_peer():
    flows = [flow("e", 200, 0), flow("b", 58, 1)]
    ctx = port(flows, PreemptionConfig.of([0, 1]))
    assert lower_priority_blocking("e", ctx) == F(8)


def test_lpb_same_class_lower_priority_dominates():
    flows = [flow("e1", 200, 0), flow("e2", 1000, 1), flow("b", 1500, 2)]
    ctx = port(flows, PreemptionConfig.of([0, 0, 1]))
    assert lower_priority_blocking("e1", ctx) == transmission_time(1000, 100)


def test_lpb_tp_and_bp():
    flows = [flow("e", 64, 0), flow("t1", 300, 1), flow("t2", 900, 2), flow("b", 1500, 3)]
    ctx = port(flows, PreemptionConfig.of([0, 1, 1, 2]))
    assert lower_priority_blocking("t1", ctx) == transmission_time(900, 100)
    assert lower_priority_blocking("t2", ctx) == F("11.44")
    assert lower_priority_blocking("b", ctx) == 0


def test_lpb_non_preemptive_degrades_to_plain_blocking():
    flows = [flow("a", 200, 0), flow("b", 700, 1), flow("c", 1500, 2)]
    ctx = port(flows, PreemptionConfig.non_preemptive(3))
    assert lower_priority_blocking("a", ctx) == transmission_time(1500, 100)
    assert lower_priority_blocking("b", ctx) == transmission_time(1500, 100)


def test_lpb_fully_preemptive_top_priority():
    flows = [flow("a", 200, 0), flow("b", 120, 1), flow("c", 90, 2)]
    ctx = port(flows, PreemptionConfig.fully_preemptive(3))
    assert lower_priority_blocking("a", ctx) == min(transmission_time(120, 100), frame_time(143, 100))


# --- same-priority blocking and interference -----------------------------------

def test_spb_express_alone():
    ctx = port([flow("e", 200, 0)], PreemptionConfig.of([0]))
    assert same_priority_blocking("e", first(ctx, "e"), ctx) == 0


def test_spb_express_second_instance():
    ctx = port([flow("e", 200, 0)], PreemptionConfig.of([0]))
    inst = FrameInstance("e", 2, F(0))
    assert same_priority_blocking("e", inst, ctx) == F("19.36")


def test_spb_tp_own_fragments():
    flows = [flow("e", 200, 0), flow("t", 1500, 1)]
    ctx = port(flows, PreemptionConfig.of([0, 1]))
    assert same_priority_blocking("t", first(ctx, "t"), ctx) == F("116.64")


def test_hpi_examples():
    flows = [flow("h", 200, 0), flow("l", 200, 1)]
    ctx = port(flows, PreemptionConfig.non_preemptive(2))
    assert higher_priority_interference("h", 1000, ctx) == 0
    assert higher_priority_interference("l", 0, ctx) == F("19.36")
    assert higher_priority_interference("l", 2500, ctx) == F("58.08")


def test_hpi_zero_counts_one_release_per_flow():
    flows = [flow(f"h{k}", 100 + k, 0) for k in range(4)] + [flow("l", 200, 1)]
    ctx = port(flows, PreemptionConfig.non_preemptive(2))
    assert higher_priority_interference("l", 0, ctx) == sum(transmission_time(100 + k, 100) for k in range(4))


# --- preemption overhead -------------------------------------------------------

def test_po_express_is_zero():
    flows = [flow("e", 200, 0), flow("b", 1500, 1)]
    ctx = port(flows, PreemptionConfig.of([0, 1]))
    assert preemption_overhead("e", first(ctx, "e"), 500, ctx) == 0


def test_po_one_higher_class_arrival():
    flows = [flow("e", 200, 0, period=100_000), flow("t", 1500, 1), flow("b", 1500, 2)]
    ctx = port(flows, PreemptionConfig.of([0, 1, 2]))
    assert preemption_overhead("t", first(ctx, "t"), 10, ctx) == F("1.92")


def test_po_tp_flow_without_higher_class_peers():
    # the express flow exists in the flowset but not at this port
    flows = [flow("e", 64, 0), flow("t", 1500, 1), flow("b", 1500, 2)]
    config = PreemptionConfig.of([0, 1, 2])
    classes = flow_classes(flows, config)
    ctx = PortAnalysisContext.build(F(100), [(f, EventModel(f.period)) for f in flows[1:]], classes, 2)
    assert ctx.entry("t").kind.value == "tp"
    assert preemption_overhead("t", first(ctx, "t"), 1000, ctx) == 0


def test_po_non_preemptive_is_zero():
    ctx = port([flow("t", 1500, 0), flow("b", 1500, 1)], PreemptionConfig.non_preemptive(2))
    assert preemption_overhead("b", first(ctx, "b"), 100, ctx) == 0


# --- queuing delay and local WCTT -----------------------------------------------

def test_lone_flow():
    ctx = port([flow("a", 200, 0)], PreemptionConfig.of([0]))
    assert queuing_delay("a", first(ctx, "a"), ctx) == 0
    bound = wctt_local("a", ctx)
    assert bound.wctt == F("19.36") and bound.q_max == 1


def test_worked_fixture_local():
    ctx = port([flow("express", 200, 0, period=5000), flow("bp", 1500, 1, period=5000)], PreemptionConfig.of([0, 1]))
    assert queuing_delay("express", first(ctx, "express"), ctx) == F("11.44")
    assert wctt_local("express", ctx).wctt == F("30.8")


def test_budget_exceeded():
    ctx = port([flow("a", 200, 0)], PreemptionConfig.of([0]))
    with pytest.raises(Unschedulable) as exc:
        wctt_local("a", ctx, budget=F(1))
    assert exc.value.reason == "deadline"


def test_overload_is_reported():
    ctx = port([flow("a", 1500, 0, period=100), flow("b", 1500, 0, period=100)], PreemptionConfig.of([0]))
    with pytest.raises(Unschedulable) as exc:
        wctt_local("a", ctx)
    assert exc.value.reason == "overload"


def test_two_same_priority_express_flows():
    ctx = port([flow("a", 200, 0, period=10_000), flow("b", 200, 0, period=10_000)], PreemptionConfig.of([0]))
    assert wctt_local("b", ctx).wctt == 2 * F("19.36")


def test_own_preemption_counted_without_minus_one():
    # i (120 B) can be cut exactly once; the express frame arriving just
    # after i started makes that cut happen, costing 24 bytes
    net = direct_link()
    flows = [flow("e", 64, 0, period=5000), flow("i", 120, 1, period=5000)]
    routes = route_all(net, flows)
    config = PreemptionConfig.of([0, 1])
    bound = analyze(net, flows, routes, config)["i"].total
    sim = simulate(net, flows, routes, config, SimConfig(phases={"e": F(1, 1000), "i": F(0)}))
    assert sim["i"].max_delay == F("23.36")
    assert bound >= sim["i"].max_delay
    assert bound == F("23.36")


def test_fifo_peer_arriving_late_in_busy_window():
    # f03 shares a FIFO queue with the jittery f02; examining only the
    # arrival a = delta_minus(q) would give 245.6 us end to end
    net = topologies.line(1, 3)

    def fl(i, s, d, period, size, p):
        return Flow(i, s, d, F(period), F(100_000), size, p)

    flows = [fl("f02", "EP1_1", "EP1_3", 129, 716, 2), fl("f03", "EP1_2", "EP1_3", 499, 374, 2),
             fl("f09", "EP1_1", "EP1_3", 257, 1414, 0)]
    routes = route_all(net, flows)
    config = PreemptionConfig.of([0, 1])
    report = analyze(net, flows, routes, config)

    jitter = {f: report[f].hops[0].wctt - transmission_time(s, 100) for f, s in [("f02", 716), ("f09", 1414)]}
    ctx = port(flows, config, jitter)
    e = ctx.entry("f03")
    naive, q = F(0), 1
    while True:
        inst = FrameInstance.critical(e, q)
        done = queuing_delay(e, inst, ctx) + ctx.completion_term(e)
        naive = max(naive, done - inst.arrival)
        if done < delta_minus(e.model, q + 1):
            break
        q += 1
    naive_total = report["f03"].hops[0].wctt + naive

    sim = simulate(net, flows, routes, config, SimConfig(phases="zero"))
    assert sim["f03"].max_delay > naive_total
    for f in flows:
        assert sim[f.id].max_delay <= report[f.id].total


# --- end-to-end ---------------------------------------------------------------

def test_three_hop_sole_flow():
    net = topologies.line(2, 1)
    flows = [Flow("f", "EP1_1", "EP2_1", F(1000), F(1000), 200, 0)]
    routes = route_all(net, flows)
    assert wctt_end_to_end("f", net, routes, flows, PreemptionConfig.of([0])) == 3 * F("19.36")


def test_shared_hop_inside_two_hop_path():
    net = topologies.star(3)
    flows = [Flow("express", "EP1", "EP3", F(5000), F(5000), 200, 0),
             Flow("bp", "EP2", "EP3", F(5000), F(5000), 1500, 1)]
    routes = route_all(net, flows)
    report = analyze(net, flows, routes, PreemptionConfig.of([0, 1]))
    assert [h.wctt for h in report["express"].hops] == [F("19.36"), F("30.8")]
    assert report["express"].total == F("19.36") + F("30.8")


def test_deadline_below_one_hop():
    net = direct_link()
    flows = [flow("f", 200, 0, deadline=10)]
    routes = route_all(net, flows)
    with pytest.raises(Unschedulable):
        wctt_end_to_end("f", net, routes, flows, PreemptionConfig.of([0]))
    report = analyze(net, flows, routes, PreemptionConfig.of([0]))
    assert report["f"].status == DEADLINE_MISS
    assert report["f"].slack == 10 - F("19.36")


def test_empty_flowset_is_schedulable():
    assert is_schedulable([], direct_link(), {}, PreemptionConfig.of([0])).schedulable


def test_single_feasible_flow_slack():
    net = topologies.line(1, 2)
    flows = [Flow("f", "EP1_1", "EP1_2", F(1000), F(900), 200, 0)]
    report = is_schedulable(flows, net, route_all(net, flows), PreemptionConfig.of([0]))
    assert report.schedulable
    assert report["f"].slack == 900 - 2 * F("19.36")


def three_class_port(deadline):
    """Express e, tp t and a 1500-byte bp frame b on one link."""
    net = direct_link()
    flows = [flow("e", 100, 0, period=2000), flow("t", 300, 1, period=2000, deadline=deadline),
             flow("b", 1500, 2, period=2000)]
    return net, flows, route_all(net, flows)


def test_tp_flow_needs_a_third_class():
    net, flows, routes = three_class_port(10_000)
    m1 = analyze(net, flows, routes, PreemptionConfig.of([0, 1, 1]))["t"].total
    m2 = analyze(net, flows, routes, PreemptionConfig.of([0, 1, 2]))["t"].total
    assert m2 < m1
    net, flows, routes = three_class_port((m1 + m2) / 2)
    assert not is_schedulable(flows, net, routes, PreemptionConfig.of([0, 1, 1])).schedulable
    assert is_schedulable(flows, net, routes, PreemptionConfig.of([0, 1, 2])).schedulable


def test_unschedulable_flow_taints_downstream_ports():
    net = topologies.star(3)
    flows = [Flow("hog", "EP1", "EP3", F(100), F(100_000), 1500, 0),
             Flow("hog2", "EP1", "EP3", F(100), F(100_000), 1500, 0),
             Flow("victim", "EP2", "EP3", F(5000), F(5000), 100, 0)]
    report = analyze(net, flows, route_all(net, flows), PreemptionConfig.of([0]))
    assert report["hog"].status == UNSCHEDULABLE
    assert report["victim"].status == UNSCHEDULABLE
    assert report.schedulable_count == 0


def test_abort_mode_stops_at_first_miss():
    net, flows, routes = three_class_port(10)
    report = analyze(net, flows, routes, PreemptionConfig.of([0, 1, 1]), abort_on_deadline=True)
    assert not report.schedulable
    assert report["t"].status == UNSCHEDULABLE


def test_switch_delay_is_added_per_switch_hop():
    net = topologies.line(2, 1)
    flows = [Flow("f", "EP1_1", "EP2_1", F(1000), F(1000), 200, 0)]
    routes = route_all(net, flows)
    report = analyze(net, flows, routes, PreemptionConfig.of([0]), switch_delay=F(2))
    assert report["f"].total == 3 * F("19.36") + 2 * 2
    sim = simulate(net, flows, routes, PreemptionConfig.of([0]), SimConfig(phases="zero", switch_delay=F(2)))
    assert sim["f"].max_delay == report["f"].total


# --- properties -----------------------------------------------------------------

port_flows = st.lists(
    st.tuples(st.integers(42, 1500), st.integers(0, 3), st.integers(200, 5000), st.integers(0, 300)),
    min_size=1, max_size=6,
)


def build_port(rows, entries_for):
    flows = [flow(f"f{k}", size, prio, period=period) for k, (size, prio, period, _) in enumerate(rows)]
    p = len({f.priority for f in flows})
    config = entries_for(p)
    jitter = {f"f{k}": j for k, (*_, j) in enumerate(rows)}
    return flows, port(flows, config, jitter)


@settings(deadline=None, max_examples=60)
@given(port_flows, st.sampled_from(["np", "full"]), st.integers(1, 4))
def test_fixed_point_iterates_non_decreasing(rows, scheme, q):
    make = PreemptionConfig.non_preemptive if scheme == "np" else PreemptionConfig.fully_preemptive
    flows, ctx = build_port(rows, make)
    for f in flows:
        history = []
        try:
            queuing_delay(f.id, FrameInstance.critical(ctx.entry(f.id), q), ctx, budget=F(10**6), history=history)
        except Unschedulable:
            pass
        assert all(a <= b for a, b in zip(history, history[1:]))


@settings(deadline=None, max_examples=60)
@given(port_flows)
def test_express_never_worse_than_non_preemptive(rows):
    flows, _ = build_port(rows, PreemptionConfig.non_preemptive)
    if not any(f.size + 42 > 143 for f in flows):
        return
    p = len({f.priority for f in flows})
    top = min(f.priority for f in flows)
    np_ctx = port(flows, PreemptionConfig.non_preemptive(p))
    entries = [0] + [1] * (p - 1) if p > 1 else [0]
    pre_ctx = port(flows, PreemptionConfig.of(entries))
    for f in flows:
        if f.priority != top:
            continue
        try:
            np_bound = wctt_local(f.id, np_ctx).wctt
        except Unschedulable:
            continue
        assert wctt_local(f.id, pre_ctx).wctt <= np_bound


def test_report_total_is_sum_of_hops():
    net = topologies.line(2, 2)
    flows = [Flow("a", "EP1_1", "EP2_1", F(500), F(2000), 800, 0),
             Flow("b", "EP1_2", "EP2_2", F(700), F(2000), 1500, 1),
             Flow("c", "EP2_1", "EP1_1", F(900), F(2000), 300, 1)]
    report = analyze(net, flows, route_all(net, flows), PreemptionConfig.of([0, 1]))
    for r in report.flows.values():
        assert r.total == sum(h.wctt for h in r.hops)
        assert (r.status == SCHEDULABLE) == (r.total <= r.deadline)
