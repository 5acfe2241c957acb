"""Trace generation, replay, differential comparison, and benchmarking."""

from __future__ import annotations

import random
import statistics
import time
from dataclasses import dataclass, field

from flowgate.errors import ConfigError
from flowgate.packet import (
    TCP,
    UDP,
    Cidr,
    NO_FLAGS,
    Packet,
    SessionId,
    TcpFlags,
    format_ip,
    render_trace_record,
)
from flowgate.pipelines import (
    BaselinePipeline,
    Dropped,
    DropReason,
    IntegratedPipeline,
    RouterConfig,
    Verdict,
)

SYN = TcpFlags(syn=True)
SYN_ACK = TcpFlags(syn=True, ack=True)
ACK = TcpFlags(ack=True)
FIN_ACK = TcpFlags(ack=True, fin=True)

TCP_PEER_PORTS = (80, 443, 22, 25)
UDP_PEER_PORTS = (53, 123, 5060)

TICK = 0.001  # seconds between consecutive trace packets

DEFAULT_NAT_PUBLIC = 0xC0000201  # 192.0.2.1
DEFAULT_NAT_PORT_LO = 40000


@dataclass(frozen=True)
class TraceSpec:
    """Deterministic synthetic-trace recipe: same spec + seed, same bytes.

    Inbound packets on the wire target the flow's NATed public endpoint, so
    the generator carries the gateway's identity and mirrors the allocator's
    deterministic lowest-free-port rule to address replies. The prediction is
    exact for traces whose first packets are all accepted; when a run's config
    rejects them, the replies simply miss in both pipelines alike.
    """

    sessions: int
    packets_per_session: int
    tcp_fraction: float = 1.0
    lan_prefix: Cidr = Cidr.parse("10.0.0.0/8")
    peers: tuple[int, ...] = ()
    seed: int = 0
    nat_public: int = DEFAULT_NAT_PUBLIC
    nat_port_lo: int = DEFAULT_NAT_PORT_LO


def _session_packets(
    proto: int,
    lan: tuple[int, int],
    gwy: tuple[int, int],
    peer: tuple[int, int],
    count: int,
) -> list[tuple[SessionId, TcpFlags]]:
    """Expand one session into (five-tuple, flags) pairs, in order.

    Outbound packets carry the LAN source; inbound ones target the public
    gateway endpoint. TCP: SYN, SYN+ACK, ACK, alternating data, and a closing
    FIN exchange when at least 5 packets are requested. UDP: alternating
    request/response.
    """
    out = SessionId(lan[0], lan[1], peer[0], peer[1], proto)
    inb = SessionId(peer[0], peer[1], gwy[0], gwy[1], proto)
    if proto != TCP:
        return [((out, inb)[i % 2], NO_FLAGS) for i in range(count)]
    plan: list[tuple[SessionId, TcpFlags]] = [(out, SYN), (inb, SYN_ACK), (out, ACK)][:count]
    data_count = count - 5 if count >= 5 else max(count - 3, 0)
    for i in range(data_count):
        plan.append(((out, inb)[i % 2], ACK))
    if count >= 5:
        plan.append((out, FIN_ACK))
        plan.append((inb, FIN_ACK))
    return plan


def generate_packets(spec: TraceSpec) -> list[Packet]:
    """Expand a TraceSpec into packets, round-robin interleaved across sessions."""
    if not spec.peers:
        raise ConfigError("trace spec needs at least one peer address")
    rng = random.Random(spec.seed)
    lan_base = spec.lan_prefix.network + 1
    host_space = max(2 ** (32 - spec.lan_prefix.prefix_len) - 2, 1)
    n_hosts = min(host_space, 4096)

    sessions = []
    ports_taken: dict[tuple[int, int, int], int] = {}  # peer tuple -> next pool offset
    for i in range(spec.sessions):
        proto = TCP if rng.random() < spec.tcp_fraction else UDP
        lan = (lan_base + i % n_hosts, 10000 + (i // n_hosts) % 50000)
        peer_ports = TCP_PEER_PORTS if proto == TCP else UDP_PEER_PORTS
        peer = (spec.peers[i % len(spec.peers)], rng.choice(peer_ports))
        peer_key = (peer[0], peer[1], proto)
        offset = ports_taken.get(peer_key, 0)
        ports_taken[peer_key] = offset + 1
        gwy = (spec.nat_public, spec.nat_port_lo + offset)
        sessions.append(_session_packets(proto, lan, gwy, peer, spec.packets_per_session))

    packets: list[Packet] = []
    ts = 0.0
    for round_index in range(spec.packets_per_session):
        for plan in sessions:
            if round_index >= len(plan):
                continue
            sid, flags = plan[round_index]
            packets.append(Packet(ts=ts, sid=sid, tos=0, ttl=64, flags=flags, payload_len=0))
            ts = round(ts + TICK, 6)
    return packets


def generate_trace(spec: TraceSpec) -> str:
    lines = [
        f"# synthetic trace: sessions={spec.sessions}"
        f" packets_per_session={spec.packets_per_session}"
        f" tcp_fraction={spec.tcp_fraction} lan={spec.lan_prefix}"
        f" peers={len(spec.peers)} seed={spec.seed}"
    ]
    lines.extend(render_trace_record(p) for p in generate_packets(spec))
    return "\n".join(lines) + "\n"


@dataclass
class MetricsReport:
    """Aggregate counters for one pipeline run."""

    pipeline: str
    packets: int = 0
    forwarded: int = 0
    dropped: dict[DropReason, int] = field(default_factory=dict)
    session_hits: int = 0
    session_misses: int = 0
    nat_lookups: int = 0
    session_lookups: int = 0
    rule_evals: int = 0
    rules_scanned: int = 0
    qos_classifications: int = 0
    route_lookups: int = 0
    wall_ns: int = 0

    @property
    def dropped_total(self) -> int:
        return sum(self.dropped.values())

    def total_consultations(self) -> int:
        return (
            self.nat_lookups
            + self.session_lookups
            + self.rule_evals
            + self.qos_classifications
            + self.route_lookups
        )

    def record(self, verdict: Verdict) -> None:
        self.packets += 1
        if isinstance(verdict.outcome, Dropped):
            reason = verdict.outcome.reason
            self.dropped[reason] = self.dropped.get(reason, 0) + 1
        else:
            self.forwarded += 1
        acct = verdict.lookups
        self.nat_lookups += acct.nat_lookups
        self.session_lookups += acct.session_lookups
        self.rule_evals += acct.rule_evals
        self.rules_scanned += acct.rules_scanned
        self.qos_classifications += acct.qos_classifications
        self.route_lookups += acct.route_lookups

    def summary(self) -> str:
        drops = ", ".join(
            f"{reason.value}={count}" for reason, count in sorted(
                self.dropped.items(), key=lambda kv: kv[0].value
            )
        )
        return (
            f"{self.pipeline}: {self.packets} packets, {self.forwarded} forwarded,"
            f" {self.dropped_total} dropped ({drops or 'none'})\n"
            f"  session lookups {self.session_lookups} ({self.session_hits} hits,"
            f" {self.session_misses} misses), nat {self.nat_lookups},"
            f" rule evals {self.rule_evals} ({self.rules_scanned} rules scanned),"
            f" qos {self.qos_classifications}, route {self.route_lookups}\n"
            f"  total consultations {self.total_consultations()}, wall {self.wall_ns} ns"
        )


CSV_HEADER = (
    "pipeline,packets,forwarded,dropped,session_hits,session_misses,"
    "nat_lookups,session_lookups,rule_evals,rules_scanned,"
    "qos_classifications,route_lookups,wall_ns"
)


def csv_row(report: MetricsReport) -> str:
    return (
        f"{report.pipeline},{report.packets},{report.forwarded},{report.dropped_total},"
        f"{report.session_hits},{report.session_misses},{report.nat_lookups},"
        f"{report.session_lookups},{report.rule_evals},{report.rules_scanned},"
        f"{report.qos_classifications},{report.route_lookups},{report.wall_ns}"
    )


def make_pipeline(name: str, config: RouterConfig):
    if name == "baseline":
        return BaselinePipeline(config)
    if name == "integrated":
        return IntegratedPipeline(config)
    raise ConfigError(f"unknown pipeline {name!r}")


def run_pipeline(pipeline, packets: list[Packet]) -> tuple[list[Verdict], MetricsReport]:
    """Replay a trace through a fresh pipeline instance.

    Wall time wraps the packet loop only; parsing and setup are excluded.
    """
    verdicts: list[Verdict] = []
    append = verdicts.append
    process = pipeline.process
    start = time.perf_counter_ns()
    for packet in packets:
        append(process(packet, packet.ts))
    wall_ns = time.perf_counter_ns() - start
    report = MetricsReport(pipeline=pipeline.name)
    for verdict in verdicts:
        report.record(verdict)
    report.session_hits = pipeline.session_hits
    report.session_misses = pipeline.session_misses
    report.wall_ns = wall_ns
    return verdicts, report


def render_verdict(verdict: Verdict) -> str:
    outcome = verdict.outcome
    if isinstance(outcome, Dropped):
        return f"drop {outcome.reason.value}"
    return (
        f"forward {format_ip(outcome.next_hop)} {outcome.iface}"
        f" {render_trace_record(outcome.packet)}"
    )


def first_divergence(a: list[Verdict], b: list[Verdict]) -> int | None:
    """Index of the first observable difference, ignoring lookup accounting."""
    for index, (va, vb) in enumerate(zip(a, b)):
        if va.outcome != vb.outcome:
            return index
    if len(a) != len(b):
        return min(len(a), len(b))
    return None


@dataclass
class ComparisonResult:
    equal: bool
    divergence_index: int | None
    baseline_verdicts: list[Verdict]
    integrated_verdicts: list[Verdict]
    baseline_report: MetricsReport
    integrated_report: MetricsReport

    def describe(self) -> str:
        if self.equal:
            return f"PASS: {self.baseline_report.packets} packets, verdict streams identical"
        i = self.divergence_index
        return (
            f"FAIL: first divergence at packet {i}\n"
            f"  baseline:   {render_verdict(self.baseline_verdicts[i])}\n"
            f"  integrated: {render_verdict(self.integrated_verdicts[i])}"
        )


def compare(config: RouterConfig, packets: list[Packet]) -> ComparisonResult:
    """Run both pipelines on the same trace with fresh state and diff verdicts."""
    baseline_verdicts, baseline_report = run_pipeline(BaselinePipeline(config), packets)
    integrated_verdicts, integrated_report = run_pipeline(IntegratedPipeline(config), packets)
    index = first_divergence(baseline_verdicts, integrated_verdicts)
    return ComparisonResult(
        equal=index is None,
        divergence_index=index,
        baseline_verdicts=baseline_verdicts,
        integrated_verdicts=integrated_verdicts,
        baseline_report=baseline_report,
        integrated_report=integrated_report,
    )


def bench(
    config: RouterConfig, packets: list[Packet], repetitions: int
) -> tuple[list[MetricsReport], dict[str, int]]:
    """Run each pipeline `repetitions` times; report per-rep counters and wall time.

    Returns the reports (baseline reps first) plus median wall_ns per pipeline.
    Counters are identical across reps by construction; wall time is not.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    reports: list[MetricsReport] = []
    medians: dict[str, int] = {}
    for name in ("baseline", "integrated"):
        walls = []
        for _ in range(repetitions):
            _, report = run_pipeline(make_pipeline(name, config), packets)
            reports.append(report)
            walls.append(report.wall_ns)
        medians[name] = int(statistics.median(walls))
    return reports, medians
