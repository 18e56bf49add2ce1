"""Command-line front end.

Exit codes: 0 success, 1 model or input error, 2 unschedulable under
``analyze --strict`` (or ``synthesize --strict``), 3 a simulated delay above
its analytic bound, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path as FsPath
from typing import Sequence

from .analysis import WcttReport, analyze
from .cpa import format_us
from .network import (
    Flow,
    ModelError,
    Network,
    PreemptionConfig,
    config_from_flow_classes,
    distinct_priorities,
    flows_to_list,
    load_flows,
    load_network,
    route_all,
    validate_config,
)
from .priority import assign_priorities_dmpo, assign_priorities_kmeans
from .simulator import SimConfig, simulate
from .synthesis import assign_preemption_class, valid_configs
from .validate import cross_validate
from .workload import GenParams, generate

SCHEMA_VERSION = 1

EXIT_OK, EXIT_MODEL, EXIT_UNSCHEDULABLE, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2, 3, 64

logger = logging.getLogger("tsnkit")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _exact(x: Fraction | None) -> dict | None:
    if x is None:
        return None
    return {"us": format_us(x), "num": x.numerator, "den": x.denominator}


def _levels(value: str) -> str | int:
    if value == "full":
        return value
    try:
        m = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a level number or 'full'") from None
    if m < 0:
        raise argparse.ArgumentTypeError("level must be >= 0")
    return m


# --- configuration selection ---------------------------------------------------

def _read_config_file(path: str) -> PreemptionConfig:
    data = json.loads(FsPath(path).read_text())
    if isinstance(data, dict):
        data = data.get("config", data.get("entries"))
    if not isinstance(data, list) or not all(isinstance(x, int) for x in data):
        raise ModelError(f"{path}: expected a list of class numbers")
    return PreemptionConfig.of(data)


def choose_config(args, network: Network, flows: Sequence[Flow], routes) -> PreemptionConfig:
    """Configuration implied by --config-file, --scheme/--levels or the flow file."""
    p = len(distinct_priorities(flows))
    if args.config_file:
        config = _read_config_file(args.config_file)
    elif args.levels == "full" or args.scheme == "fully-preemptive":
        config = PreemptionConfig.fully_preemptive(p)
    elif args.levels is not None:
        if args.levels > p - 1:
            raise ModelError(f"level {args.levels} needs at least {args.levels + 1} priorities, have {p}")
        candidates = valid_configs(p, args.levels)
        config = candidates.configs[0]
        for c in candidates:
            if analyze(network, flows, routes, c, abort_on_deadline=True).schedulable:
                config = c
                break
    elif args.scheme == "m-level":
        raise ModelError("--scheme m-level needs --levels")
    elif args.scheme == "non-preemptive":
        config = PreemptionConfig.non_preemptive(p)
    elif all(f.preemption_class is not None for f in flows):
        config = config_from_flow_classes(flows)
    else:
        config = PreemptionConfig.non_preemptive(p)
    check = validate_config(flows, config)
    if not check.ok:
        raise ModelError("invalid configuration " + str(list(config.entries)) + ": "
                         + "; ".join(f"{v.rule} {v.message}" for v in check.violations))
    return config


def _load(args) -> tuple[Network, list[Flow], dict]:
    network = load_network(args.network)
    flows = load_flows(args.flows)
    if not flows:
        raise ModelError("flow file is empty")
    return network, flows, route_all(network, flows)


def _require_priorities(flows: Sequence[Flow]) -> None:
    missing = [f.id for f in flows if f.priority is None]
    if missing:
        raise ModelError(f"flows without priority: {', '.join(missing[:5])}; run 'prioritize' first")


def _config_dict(config: PreemptionConfig) -> dict:
    return {"level": config.level, "entries": list(config.entries)}


# --- report rendering ----------------------------------------------------------

def wctt_report_dict(report: WcttReport) -> dict:
    flows = []
    for fid, r in sorted(report.flows.items()):
        flows.append({
            "id": fid,
            "status": r.status,
            "deadline_us": _exact(r.deadline),
            "total_us": _exact(r.total),
            "slack_us": _exact(r.slack),
            "hops": [{"link": list(h.link), "wctt_us": _exact(h.wctt), "q_max": h.q_max} for h in r.hops],
            "reason": r.reason,
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "report": "wctt",
        "config": _config_dict(report.config),
        "schedulable": report.schedulable,
        "schedulable_count": report.schedulable_count,
        "rounds": report.rounds,
        "flows": flows,
    }


def wctt_report_csv(report: WcttReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["flow_id", "hop_wctt_us", "total_us", "deadline_us", "slack_us", "verdict"])
    for fid, r in sorted(report.flows.items()):
        hops = ";".join(format_us(h.wctt) for h in r.hops)
        total = "" if r.total is None else format_us(r.total)
        slack = "" if r.slack is None else format_us(r.slack)
        w.writerow([fid, hops, total, format_us(r.deadline), slack, r.status])
    return buf.getvalue()


def _emit(args, payload: dict | list | str) -> None:
    text = payload if isinstance(payload, str) else json.dumps(payload, indent=2) + "\n"
    if args.out:
        FsPath(args.out).write_text(text)
    else:
        sys.stdout.write(text)


# --- subcommands ---------------------------------------------------------------

def cmd_analyze(args) -> int:
    network, flows, routes = _load(args)
    _require_priorities(flows)
    config = choose_config(args, network, flows, routes)
    report = analyze(network, flows, routes, config, switch_delay=args.switch_delay_us)
    _emit(args, wctt_report_csv(report) if args.format == "csv" else wctt_report_dict(report))
    if args.strict and not report.schedulable:
        return EXIT_UNSCHEDULABLE
    return EXIT_OK


def cmd_synthesize(args) -> int:
    network, flows, routes = _load(args)
    _require_priorities(flows)
    result = assign_preemption_class(network, flows, routes)
    body = {"schema_version": SCHEMA_VERSION, "report": "synthesis", **result.to_dict()}
    _emit(args, body)
    if result.found:
        print(f"Found(m={result.level}, config={list(result.config.entries)})", file=sys.stderr)
        return EXIT_OK
    print("Unschedulable", file=sys.stderr)
    return EXIT_UNSCHEDULABLE if args.strict else EXIT_OK


def cmd_prioritize(args) -> int:
    network, flows, routes = _load(args)
    if args.method == "kmeans":
        assignment = assign_priorities_kmeans(network, flows, routes, seed=args.seed)
    else:
        k = args.k if args.k is not None else min(8, len(flows))
        assignment = assign_priorities_dmpo(flows, k)
    body = {
        "schema_version": SCHEMA_VERSION,
        "report": "priorities",
        "method": args.method,
        **assignment.to_dict(),
        "flows": flows_to_list(assignment.apply(flows)),
    }
    _emit(args, body)
    return EXIT_OK


def _sim_config(args) -> SimConfig:
    return SimConfig(
        seed=args.seed,
        horizon=Fraction(args.horizon_us) if args.horizon_us else Fraction(0),
        phases=args.phases,
        switch_delay=Fraction(args.switch_delay_us),
    )


def cmd_simulate(args) -> int:
    network, flows, routes = _load(args)
    _require_priorities(flows)
    config = choose_config(args, network, flows, routes)
    sim_config = _sim_config(args)
    if args.trace:
        with open(args.trace, "w") as trace:
            report = simulate(network, flows, routes, config, sim_config, trace)
    else:
        report = simulate(network, flows, routes, config, sim_config)
    body = {"schema_version": SCHEMA_VERSION, "report": "simulation",
            "config": _config_dict(config), **report.to_dict()}
    _emit(args, body)
    return EXIT_OK


def cmd_validate(args) -> int:
    network, flows, routes = _load(args)
    _require_priorities(flows)
    config = choose_config(args, network, flows, routes)
    sim_config = _sim_config(args)
    result = cross_validate(network, flows, routes, config, sim_config, runs=args.runs)
    rows = []
    for fid, m in sorted(result.flows.items()):
        rows.append({
            "id": fid,
            "mwctt_us": _exact(m.mwctt),
            "wctt_us": _exact(m.wctt),
            "margin_us": _exact(m.margin),
            "worst_seed": m.worst_seed,
            "violated": m.violated,
            "note": m.note,
        })
    body = {
        "schema_version": SCHEMA_VERSION,
        "report": "validation",
        "config": _config_dict(config),
        "seeds": list(result.seeds),
        "ok": result.ok,
        "flows": rows,
    }
    if result.violations:
        # replay the first offending run with a trace
        worst = result.violations[0]
        path = args.trace or f"tsnkit_violation_seed{worst.worst_seed}.ndjson"
        replay = SimConfig(worst.worst_seed, sim_config.horizon, sim_config.phases, sim_config.switch_delay)
        with open(path, "w") as trace:
            simulate(network, flows, routes, config, replay, trace)
        body["trace"] = path
        for m in result.violations:
            print(f"violation: {m.flow_id} mWCTT {format_us(m.mwctt)}us > WCTT {format_us(m.wctt)}us "
                  f"(seed {m.worst_seed})", file=sys.stderr)
    _emit(args, body)
    return EXIT_OK if result.ok else EXIT_VIOLATION


def cmd_generate(args) -> int:
    network = load_network(args.network)
    params = GenParams(
        count=args.count, seed=args.seed, constrained=args.constrained,
        period_range=tuple(args.period_range), deadline_range=tuple(args.deadline_range),
        size_range=tuple(args.size_range),
    )
    _emit(args, flows_to_list(generate(network, params)))
    return EXIT_OK


# --- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tsnkit", description="Timing analysis for Ethernet with multi-level frame preemption.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def inputs(p):
        p.add_argument("network", help="network JSON file")
        p.add_argument("flows", help="flow JSON file")
        p.add_argument("--out", help="write the report here instead of stdout")

    def scheme(p):
        p.add_argument("--scheme", choices=["non-preemptive", "m-level", "fully-preemptive"])
        p.add_argument("--levels", type=_levels, metavar="M|full",
                       help="preemption level; picks the first schedulable configuration at that level")
        p.add_argument("--config-file", help="JSON list mapping priority ranks to classes")
        p.add_argument("--switch-delay-us", type=Fraction, default=Fraction(0))

    def sim(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--horizon-us", type=Fraction, default=None)
        p.add_argument("--phases", choices=["random", "zero"], default="random")
        p.add_argument("--trace", help="write an ndjson event trace")

    p = sub.add_parser("analyze", help="per-hop and end-to-end WCTT bounds")
    inputs(p)
    scheme(p)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--strict", action="store_true", help="exit 2 unless every flow is schedulable")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synthesize", help="lowest preemption level that schedules the flowset")
    inputs(p)
    p.add_argument("--strict", action="store_true", help="exit 2 when no configuration works")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("prioritize", help="assign priorities")
    inputs(p)
    p.add_argument("--method", choices=["kmeans", "dmpo"], default="kmeans")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, help="number of priorities for dmpo (default min(8, flows))")
    p.set_defaults(func=cmd_prioritize)

    p = sub.add_parser("simulate", help="discrete-event simulation")
    inputs(p)
    scheme(p)
    sim(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", help="compare simulated delays with the analytic bounds")
    inputs(p)
    scheme(p)
    sim(p)
    p.add_argument("--runs", type=int, default=1)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("generate", help="random flowset for a network")
    p.add_argument("network")
    p.add_argument("--out")
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--constrained", action="store_true", help="force deadline <= period")
    p.add_argument("--period-range", type=int, nargs=2, default=[500, 100_000], metavar=("LO", "HI"))
    p.add_argument("--deadline-range", type=int, nargs=2, default=[500, 100_000], metavar=("LO", "HI"))
    p.add_argument("--size-range", type=int, nargs=2, default=[64, 1500], metavar=("LO", "HI"))
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ModelError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
