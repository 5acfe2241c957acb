"""Five-tuple matchers shared by the filter and QoS policy grammars."""

from __future__ import annotations

from dataclasses import dataclass

from flowgate.errors import ConfigError
from flowgate.packet import TCP, UDP, Cidr, SessionId

ANY_CIDR = Cidr(0, 0)


@dataclass(frozen=True, slots=True)
class PortMatch:
    lo: int = 0
    hi: int = 65535

    def contains(self, port: int) -> bool:
        return self.lo <= port <= self.hi


ANY_PORTS = PortMatch()


def parse_ports(token: str) -> PortMatch:
    """'any', a single port, or an inclusive 'N-M' range."""
    if token == "any":
        return ANY_PORTS
    lo_part, sep, hi_part = token.partition("-")
    if not lo_part.isdigit() or (sep and not hi_part.isdigit()):
        raise ValueError(f"bad port spec {token!r}")
    lo = int(lo_part)
    hi = int(hi_part) if sep else lo
    if lo > hi or hi > 65535:
        raise ValueError(f"bad port spec {token!r}")
    return PortMatch(lo, hi)


def parse_proto(token: str) -> int | None:
    """'any' -> None (wildcard), else tcp/udp/decimal protocol number."""
    if token == "any":
        return None
    if token == "tcp":
        return TCP
    if token == "udp":
        return UDP
    if token.isdigit() and int(token) <= 255:
        return int(token)
    raise ValueError(f"unknown protocol {token!r}")


def parse_cidr(token: str) -> Cidr:
    if token == "any":
        return ANY_CIDR
    return Cidr.parse(token)


@dataclass(frozen=True, slots=True)
class TupleMatcher:
    proto: int | None
    src: Cidr
    src_ports: PortMatch
    dst: Cidr
    dst_ports: PortMatch

    def matches(self, sid: SessionId) -> bool:
        if self.proto is not None and sid.proto != self.proto:
            return False
        return (
            self.src.contains(sid.src_addr)
            and self.src_ports.contains(sid.src_port)
            and self.dst.contains(sid.dst_addr)
            and self.dst_ports.contains(sid.dst_port)
        )


def parse_matcher(fields: list[str], lineno: int) -> TupleMatcher:
    """Parse the 5 matcher tokens: proto src_cidr src_ports dst_cidr dst_ports."""
    try:
        return TupleMatcher(
            proto=parse_proto(fields[0]),
            src=parse_cidr(fields[1]),
            src_ports=parse_ports(fields[2]),
            dst=parse_cidr(fields[3]),
            dst_ports=parse_ports(fields[4]),
        )
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: {exc}") from exc
