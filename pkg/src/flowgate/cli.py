"""Command-line entry point: gen, run, compare, and bench subcommands."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from flowgate.errors import ConfigError, TraceError
from flowgate.filters import parse_rules
from flowgate.harness import (
    CSV_HEADER,
    TraceSpec,
    bench,
    compare,
    csv_row,
    generate_packets,
    generate_trace,
    make_pipeline,
    render_verdict,
    run_pipeline,
)
from flowgate.nat import parse_nat_config
from flowgate.packet import Cidr, load_trace, parse_ip
from flowgate.pipelines import RouterConfig
from flowgate.qos import parse_qos
from flowgate.routing import parse_routes

EXIT_OK = 0
EXIT_COMPARE_FAIL = 1
EXIT_CONFIG_ERROR = 2
EXIT_TRACE_ERROR = 3


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--rules", required=True, help="filter rules file")
    parser.add_argument("--routes", required=True, help="routing table file")
    parser.add_argument("--nat", required=True, help="NAT config file")
    parser.add_argument("--qos", required=True, help="QoS policy file")
    parser.add_argument("--lan-prefix", required=True, help="LAN prefix, e.g. 10.0.0.0/8")


def _add_spec_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--sessions", type=int, default=10)
    parser.add_argument("--packets-per-session", type=int, default=100)
    parser.add_argument("--mix", type=float, default=1.0, help="fraction of TCP sessions")
    parser.add_argument(
        "--peers",
        default="198.51.100.9,203.0.113.77",
        help="comma-separated external peer addresses",
    )
    parser.add_argument("--seed", type=int, default=0)


def load_config(args: argparse.Namespace) -> RouterConfig:
    def read(path: str) -> str:
        try:
            return Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc

    try:
        lan_prefix = Cidr.parse(args.lan_prefix)
    except ValueError as exc:
        raise ConfigError(f"--lan-prefix: {exc}") from exc
    return RouterConfig(
        lan_prefix=lan_prefix,
        rules=parse_rules(read(args.rules)),
        qos=parse_qos(read(args.qos)),
        routes=parse_routes(read(args.routes)),
        nat=parse_nat_config(read(args.nat)),
    )


def _trace_spec(args: argparse.Namespace) -> TraceSpec:
    peers = tuple(parse_ip(p) for p in args.peers.split(",") if p)
    try:
        lan_prefix = Cidr.parse(args.lan_prefix)
    except ValueError as exc:
        raise ConfigError(f"--lan-prefix: {exc}") from exc
    spec = TraceSpec(
        sessions=args.sessions,
        packets_per_session=args.packets_per_session,
        tcp_fraction=args.mix,
        lan_prefix=lan_prefix,
        peers=peers,
        seed=args.seed,
    )
    # replies target the gateway identity; align it with the NAT config if given
    if getattr(args, "nat", None):
        nat = parse_nat_config(Path(args.nat).read_text(encoding="utf-8"))
        spec = replace(spec, nat_public=nat.public_addr, nat_port_lo=nat.port_lo)
    return spec


def _read_trace(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise TraceError(f"cannot read {path}: {exc}") from exc
    return load_trace(text)


def _write_or_print(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_gen(args: argparse.Namespace) -> int:
    _write_or_print(generate_trace(_trace_spec(args)), args.out)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args)
    packets = _read_trace(args.trace)
    pipeline = make_pipeline(args.pipeline, config)
    verdicts, report = run_pipeline(pipeline, packets)
    if args.verdicts:
        Path(args.verdicts).write_text(
            "".join(render_verdict(v) + "\n" for v in verdicts), encoding="utf-8"
        )
    if args.out:
        Path(args.out).write_text(f"{CSV_HEADER}\n{csv_row(report)}\n", encoding="utf-8")
    print(report.summary())
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    config = load_config(args)
    packets = _read_trace(args.trace)
    result = compare(config, packets)
    print(result.describe())
    print(result.baseline_report.summary())
    print(result.integrated_report.summary())
    return EXIT_OK if result.equal else EXIT_COMPARE_FAIL


def cmd_bench(args: argparse.Namespace) -> int:
    config = load_config(args)
    packets = generate_packets(_trace_spec(args))
    reports, medians = bench(config, packets, args.reps)
    csv_text = "\n".join([CSV_HEADER] + [csv_row(r) for r in reports]) + "\n"
    _write_or_print(csv_text, args.out)
    ratio = medians["baseline"] / medians["integrated"] if medians["integrated"] else float("inf")
    print(
        f"median wall_ns: baseline={medians['baseline']} integrated={medians['integrated']}"
        f" speedup={ratio:.2f}x",
        file=sys.stderr,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowgate",
        description="Replay traces through the multi-table and unified-session-table pipelines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic trace")
    _add_spec_flags(gen)
    gen.add_argument("--lan-prefix", default="10.0.0.0/8")
    gen.add_argument("--nat", default=None, help="NAT config to address replies to (optional)")
    gen.add_argument("--out", default=None)
    gen.set_defaults(func=cmd_gen)

    run = sub.add_parser("run", help="replay a trace through one pipeline")
    _add_config_flags(run)
    run.add_argument("--trace", required=True)
    run.add_argument("--pipeline", choices=("baseline", "integrated"), required=True)
    run.add_argument("--out", default=None, help="write metrics CSV here")
    run.add_argument("--verdicts", default=None, help="write per-packet verdicts here")
    run.set_defaults(func=cmd_run)

    cmp_ = sub.add_parser("compare", help="run both pipelines and diff the verdict streams")
    _add_config_flags(cmp_)
    cmp_.add_argument("--trace", required=True)
    cmp_.set_defaults(func=cmd_compare)

    bench_ = sub.add_parser("bench", help="generate a trace and time both pipelines")
    _add_config_flags(bench_)
    _add_spec_flags(bench_)
    bench_.add_argument("--reps", type=int, default=3)
    bench_.add_argument("--out", default=None, help="write per-repetition CSV here")
    bench_.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except TraceError as exc:
        print(f"trace error: {exc}", file=sys.stderr)
        return EXIT_TRACE_ERROR


if __name__ == "__main__":
    sys.exit(main())
