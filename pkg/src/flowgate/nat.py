"""NAPT: public endpoint allocation and header rewriting for outbound flows."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

from flowgate.errors import ConfigError
from flowgate.packet import Packet, SessionId, format_ip, parse_ip

Key = tuple[int, int, int, int, int]


class NatPoolExhausted(RuntimeError):
    """No free public port remains for the requested peer tuple."""


@dataclass(frozen=True, slots=True)
class NatConfig:
    public_addr: int
    port_lo: int
    port_hi: int

    @property
    def pool_size(self) -> int:
        return self.port_hi - self.port_lo + 1


def parse_nat_config(text: str) -> NatConfig:
    """Parse the two-line NAT config: `public <ip>` and `ports <lo>-<hi>`."""
    public_addr = None
    ports = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split()
        if fields[0] == "public" and len(fields) == 2:
            try:
                public_addr = parse_ip(fields[1])
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: {exc}") from exc
        elif fields[0] == "ports" and len(fields) == 2:
            lo_part, sep, hi_part = fields[1].partition("-")
            if not sep or not lo_part.isdigit() or not hi_part.isdigit():
                raise ConfigError(f"line {lineno}: bad port range {fields[1]!r}")
            ports = (int(lo_part), int(hi_part))
            if ports[0] > ports[1] or ports[1] > 65535:
                raise ConfigError(f"line {lineno}: bad port range {fields[1]!r}")
        else:
            raise ConfigError(f"line {lineno}: expected 'public <ip>' or 'ports <lo>-<hi>'")
    if public_addr is None or ports is None:
        raise ConfigError("NAT config needs both a 'public' and a 'ports' line")
    return NatConfig(public_addr, ports[0], ports[1])


def find_free_port(
    cfg: NatConfig,
    ext_addr: int,
    ext_port: int,
    proto: int,
    in_use: Callable[[int], bool],
) -> int:
    """Lowest port in the pool not live for this peer tuple.

    Port uniqueness is per (ext_addr, ext_port, proto): the same public port
    may serve two flows talking to different peers. Deterministic by
    construction: lowest-free wins.
    """
    for port in range(cfg.port_lo, cfg.port_hi + 1):
        if not in_use(port):
            return port
    raise NatPoolExhausted(
        f"no free port for peer {format_ip(ext_addr)}:{ext_port} proto {proto}"
    )


@dataclass(slots=True)
class NatMapping:
    lan_addr: int
    lan_port: int
    gwy_addr: int
    gwy_port: int
    ext_addr: int
    ext_port: int
    proto: int
    expiry: float

    @property
    def forward_key(self) -> Key:
        return (self.lan_addr, self.lan_port, self.ext_addr, self.ext_port, self.proto)

    @property
    def reverse_key(self) -> Key:
        return (self.gwy_addr, self.gwy_port, self.ext_addr, self.ext_port, self.proto)


class NatTable:
    """Standalone NAT table for the multi-table pipeline.

    Forward map (lan side -> mapping) and reverse map (gwy side -> mapping)
    are kept mutually consistent; mappings expire lazily like session entries.
    """

    def __init__(self) -> None:
        self._fwd: dict[Key, NatMapping] = {}
        self._rev: dict[Key, NatMapping] = {}
        self.lookups = 0

    def __len__(self) -> int:
        return len(self._fwd)

    def allocate(
        self,
        cfg: NatConfig,
        lan_addr: int,
        lan_port: int,
        ext_addr: int,
        ext_port: int,
        proto: int,
        now: float,
        expiry: float,
    ) -> NatMapping:
        existing = self._fwd.get((lan_addr, lan_port, ext_addr, ext_port, proto))
        if existing is not None:
            if existing.expiry > now:
                raise RuntimeError("flow already has a live mapping")
            self.remove(existing)
        port = find_free_port(
            cfg,
            ext_addr,
            ext_port,
            proto,
            lambda p: self.port_in_use(cfg.public_addr, p, ext_addr, ext_port, proto, now),
        )
        mapping = NatMapping(
            lan_addr, lan_port, cfg.public_addr, port, ext_addr, ext_port, proto, expiry
        )
        self._fwd[mapping.forward_key] = mapping
        self._rev[mapping.reverse_key] = mapping
        return mapping

    def remove(self, mapping: NatMapping) -> None:
        del self._fwd[mapping.forward_key]
        del self._rev[mapping.reverse_key]

    def _live(self, mapping: NatMapping | None, now: float) -> NatMapping | None:
        if mapping is None:
            return None
        if mapping.expiry <= now:
            self.remove(mapping)
            return None
        return mapping

    def lookup_forward(self, key: Key, now: float) -> NatMapping | None:
        self.lookups += 1
        return self._live(self._fwd.get(key), now)

    def lookup_reverse(self, key: Key, now: float) -> NatMapping | None:
        self.lookups += 1
        return self._live(self._rev.get(key), now)

    def port_in_use(
        self, gwy_addr: int, gwy_port: int, ext_addr: int, ext_port: int, proto: int, now: float
    ) -> bool:
        return self._live(self._rev.get((gwy_addr, gwy_port, ext_addr, ext_port, proto)), now) is not None


def translate_outbound(packet: Packet, mapping) -> Packet:
    """Rewrite src to the mapping's public identity. Nothing else changes."""
    sid = packet.sid
    if (sid.src_addr, sid.src_port) != (mapping.lan_addr, mapping.lan_port):
        raise ValueError("packet does not match the mapping's LAN side")
    new_sid = SessionId(mapping.gwy_addr, mapping.gwy_port, sid.dst_addr, sid.dst_port, sid.proto)
    return replace(packet, sid=new_sid)


def translate_inbound(packet: Packet, mapping) -> Packet:
    """Rewrite dst back to the mapping's LAN endpoint."""
    sid = packet.sid
    if (sid.dst_addr, sid.dst_port) != (mapping.gwy_addr, mapping.gwy_port):
        raise ValueError("packet does not match the mapping's public side")
    new_sid = SessionId(sid.src_addr, sid.src_port, mapping.lan_addr, mapping.lan_port, sid.proto)
    return replace(packet, sid=new_sid)
