"""Packet model: IPv4 addresses, five-tuples, TCP flags, and the text trace format.

All types here are immutable values; every transformation returns a new object.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from flowgate.errors import TraceError

TCP = 6
UDP = 17

FLAG_LETTERS = "SAFR"  # rendered in this order, always


def parse_ip(text: str) -> int:
    """Dotted quad -> host-order int. Raises ValueError on malformed input."""
    parts = text.split(".")
    if len(parts) != 4:
        raise ValueError(f"malformed IPv4 address {text!r}")
    value = 0
    for part in parts:
        if not part.isdigit():
            raise ValueError(f"malformed IPv4 address {text!r}")
        octet = int(part)
        if octet > 255:
            raise ValueError(f"malformed IPv4 address {text!r}")
        value = (value << 8) | octet
    return value


def format_ip(addr: int) -> str:
    return f"{(addr >> 24) & 0xFF}.{(addr >> 16) & 0xFF}.{(addr >> 8) & 0xFF}.{addr & 0xFF}"


@dataclass(frozen=True, slots=True)
class Cidr:
    """An IPv4 prefix. The network address is stored with host bits cleared."""

    network: int
    prefix_len: int

    @classmethod
    def parse(cls, text: str) -> "Cidr":
        addr_part, sep, len_part = text.partition("/")
        if not sep or not len_part.isdigit():
            raise ValueError(f"malformed CIDR {text!r}")
        prefix_len = int(len_part)
        if prefix_len > 32:
            raise ValueError(f"prefix length out of range in {text!r}")
        addr = parse_ip(addr_part)
        mask = 0xFFFFFFFF << (32 - prefix_len) & 0xFFFFFFFF if prefix_len else 0
        return cls(addr & mask, prefix_len)

    def contains(self, addr: int) -> bool:
        if self.prefix_len == 0:
            return True
        return (addr >> (32 - self.prefix_len)) == (self.network >> (32 - self.prefix_len))

    def __str__(self) -> str:
        return f"{format_ip(self.network)}/{self.prefix_len}"


@dataclass(frozen=True, slots=True)
class TcpFlags:
    syn: bool = False
    ack: bool = False
    fin: bool = False
    rst: bool = False

    @classmethod
    def from_text(cls, text: str) -> "TcpFlags":
        """Parse '-' or a subset of "SAFR" written in that canonical order."""
        if text == "-":
            return NO_FLAGS
        if not text or any(c not in FLAG_LETTERS for c in text):
            raise ValueError(f"bad flags {text!r}")
        # reject duplicates and out-of-order spellings so render/parse is one-to-one
        indexes = [FLAG_LETTERS.index(c) for c in text]
        if indexes != sorted(set(indexes)):
            raise ValueError(f"flags not in canonical SAFR order: {text!r}")
        return cls("S" in text, "A" in text, "F" in text, "R" in text)

    def to_text(self) -> str:
        text = "".join(
            letter
            for letter, present in zip(FLAG_LETTERS, (self.syn, self.ack, self.fin, self.rst))
            if present
        )
        return text or "-"

    def __bool__(self) -> bool:
        return self.syn or self.ack or self.fin or self.rst


NO_FLAGS = TcpFlags()


@dataclass(frozen=True, slots=True)
class SessionId:
    """The five-tuple selecting one flow, as carried in a packet header."""

    src_addr: int
    src_port: int
    dst_addr: int
    dst_port: int
    proto: int

    def reversed(self) -> "SessionId":
        return SessionId(self.dst_addr, self.dst_port, self.src_addr, self.src_port, self.proto)


@dataclass(frozen=True, slots=True)
class Packet:
    """One IP datagram's header fields plus its logical arrival time."""

    ts: float
    sid: SessionId
    tos: int
    ttl: int
    flags: TcpFlags
    payload_len: int

    @property
    def dscp(self) -> int:
        return self.tos >> 2


class Direction(enum.Enum):
    OUTBOUND = "out"
    INBOUND = "in"


def classify_direction(packet: Packet, lan_prefix: Cidr) -> Direction:
    """Outbound iff the source address lies inside the LAN prefix."""
    if lan_prefix.contains(packet.sid.src_addr):
        return Direction.OUTBOUND
    return Direction.INBOUND


def merge_dscp(tos: int, dscp: int) -> int:
    """Write dscp into the upper 6 ToS bits, preserving the 2 ECN bits."""
    if not 0 <= dscp <= 63:
        raise ValueError(f"dscp {dscp} out of range 0..63")
    return (dscp << 2) | (tos & 0x03)


def set_dscp(packet: Packet, dscp: int) -> Packet:
    return replace(packet, tos=merge_dscp(packet.tos, dscp))


def _parse_endpoint(token: str, column: str) -> tuple[int, int]:
    addr_part, sep, port_part = token.rpartition(":")
    if not sep:
        raise TraceError(f"{column}: expected ip:port, got {token!r}")
    try:
        addr = parse_ip(addr_part)
    except ValueError as exc:
        raise TraceError(f"{column}: {exc}") from exc
    if not port_part.isdigit():
        raise TraceError(f"{column}: bad port {port_part!r}")
    port = int(port_part)
    if port > 65535:
        raise TraceError(f"{column}: port {port} out of range")
    return addr, port


def parse_trace_record(line: str) -> Packet:
    """Parse one trace line.

    Grammar (whitespace separated):
        ts proto src_ip:src_port dst_ip:dst_port flags payload_len tos [ttl]
    proto is tcp, udp, or a decimal protocol number; flags is '-' or a subset
    of "SAFR"; ttl is optional and defaults to 64.
    """
    fields = line.split()
    if len(fields) not in (7, 8):
        raise TraceError(f"expected 7 or 8 columns, got {len(fields)}")

    try:
        ts = float(fields[0])
    except ValueError as exc:
        raise TraceError(f"ts: not a number: {fields[0]!r}") from exc
    if not math.isfinite(ts) or ts < 0:
        raise TraceError(f"ts: bad timestamp {fields[0]!r}")

    proto_token = fields[1]
    if proto_token == "tcp":
        proto = TCP
    elif proto_token == "udp":
        proto = UDP
    elif proto_token.isdigit() and int(proto_token) <= 255:
        proto = int(proto_token)
    else:
        raise TraceError(f"proto: unknown protocol {proto_token!r}")

    src_addr, src_port = _parse_endpoint(fields[2], "src")
    dst_addr, dst_port = _parse_endpoint(fields[3], "dst")
    if proto not in (TCP, UDP) and (src_port or dst_port):
        raise TraceError(f"src/dst: ports must be 0 for protocol {proto}")

    try:
        flags = TcpFlags.from_text(fields[4])
    except ValueError as exc:
        raise TraceError(f"flags: {exc}") from exc
    if flags and proto != TCP:
        raise TraceError(f"flags: TCP flags on protocol {proto}")

    if not fields[5].isdigit() or int(fields[5]) > 65535:
        raise TraceError(f"payload_len: bad value {fields[5]!r}")
    payload_len = int(fields[5])

    if not fields[6].isdigit() or int(fields[6]) > 255:
        raise TraceError(f"tos: bad value {fields[6]!r}")
    tos = int(fields[6])

    if len(fields) == 8:
        if not fields[7].isdigit() or int(fields[7]) > 255:
            raise TraceError(f"ttl: bad value {fields[7]!r}")
        ttl = int(fields[7])
        if ttl == 0:
            raise TraceError("ttl: must be >= 1 on ingress")
    else:
        ttl = 64

    sid = SessionId(src_addr, src_port, dst_addr, dst_port, proto)
    return Packet(ts=ts, sid=sid, tos=tos, ttl=ttl, flags=flags, payload_len=payload_len)


def render_trace_record(packet: Packet) -> str:
    """Inverse of parse_trace_record: parse(render(p)) == p."""
    sid = packet.sid
    proto = {TCP: "tcp", UDP: "udp"}.get(sid.proto, str(sid.proto))
    return (
        f"{packet.ts} {proto}"
        f" {format_ip(sid.src_addr)}:{sid.src_port}"
        f" {format_ip(sid.dst_addr)}:{sid.dst_port}"
        f" {packet.flags.to_text()} {packet.payload_len} {packet.tos} {packet.ttl}"
    )


def load_trace(text: str) -> list[Packet]:
    """Parse a whole trace. '#' lines and blank lines are skipped.

    Timestamps must be non-decreasing across the file.
    """
    packets: list[Packet] = []
    last_ts = 0.0
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            packet = parse_trace_record(stripped)
        except TraceError as exc:
            raise TraceError(f"line {lineno}: {exc}") from exc
        if packet.ts < last_ts:
            raise TraceError(f"line {lineno}: ts: timestamps must be non-decreasing")
        last_ts = packet.ts
        packets.append(packet)
    return packets
