"""The unified per-flow session table.

One entry carries everything per-packet processing needs: the NAT identity
(lan/gwy/ext endpoint triple), connection state and expiry, the flow's DSCP,
and a cached next hop for each direction. A table holds two exact-match
indexes over the same entry set so a single lookup serves either direction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from flowgate.packet import TCP, Direction, TcpFlags, format_ip

Key = tuple[int, int, int, int, int]


class SessionState(enum.Enum):
    SYN_SENT = "syn_sent"
    SYN_RECEIVED = "syn_received"
    ESTABLISHED = "established"
    FIN_WAIT = "fin_wait"
    CLOSED = "closed"
    OPEN = "open"  # the only state non-TCP sessions use


@dataclass(slots=True)
class Timeouts:
    """Idle timeouts in seconds, keyed by protocol/state class."""

    tcp_established: float = 300.0
    tcp_transient: float = 30.0  # handshake and teardown states
    non_tcp: float = 60.0
    closed_grace: float = 5.0  # keeps closed entries around to block key reuse


def entry_timeout(proto: int, state: SessionState, timeouts: Timeouts) -> float:
    if proto != TCP:
        return timeouts.non_tcp
    if state is SessionState.ESTABLISHED:
        return timeouts.tcp_established
    if state is SessionState.CLOSED:
        return timeouts.closed_grace
    return timeouts.tcp_transient


# TCP transition function, a pure function of (state, flags, direction).
# Precedence: Closed is terminal (everything violates); RST always closes;
# SYN+FIN together is bogus; FIN moves toward teardown (FinWait, then Closed
# on the second FIN from either side); SYN is only valid as the handshake
# reply (inbound SYN+ACK) or as a retransmission of it / of the initial SYN;
# flagless or ACK-only segments are data, legal once Established or draining
# in FinWait, plus the outbound ACK that completes the handshake. Everything
# else is a violation (None).
def next_tcp_state(
    state: SessionState, flags: TcpFlags, direction: Direction
) -> SessionState | None:
    if state is SessionState.CLOSED:
        return None
    if flags.rst:
        return SessionState.CLOSED
    if flags.syn and flags.fin:
        return None
    if flags.fin:
        if state is SessionState.FIN_WAIT:
            return SessionState.CLOSED
        return SessionState.FIN_WAIT
    if flags.syn:
        if state is SessionState.SYN_SENT:
            if direction is Direction.INBOUND and flags.ack:
                return SessionState.SYN_RECEIVED
            if direction is Direction.OUTBOUND and not flags.ack:
                return SessionState.SYN_SENT  # retransmitted initial SYN
            return None
        if state is SessionState.SYN_RECEIVED and direction is Direction.INBOUND and flags.ack:
            return SessionState.SYN_RECEIVED  # retransmitted SYN+ACK
        return None
    # no SYN/FIN/RST: plain data or ACK
    if state is SessionState.ESTABLISHED:
        return SessionState.ESTABLISHED
    if state is SessionState.FIN_WAIT:
        return SessionState.FIN_WAIT
    if state is SessionState.SYN_RECEIVED and direction is Direction.OUTBOUND and flags.ack:
        return SessionState.ESTABLISHED  # handshake-completing ACK
    return None


def next_state(
    proto: int, state: SessionState, flags: TcpFlags, direction: Direction
) -> SessionState | None:
    """Transition for any protocol; non-TCP sessions stay Open."""
    if proto != TCP:
        return SessionState.OPEN
    return next_tcp_state(state, flags, direction)


def initial_state(proto: int) -> SessionState:
    return SessionState.SYN_SENT if proto == TCP else SessionState.OPEN


def advance(entry, flags: TcpFlags, direction: Direction, now: float, timeouts: Timeouts) -> bool:
    """Apply one packet to an entry's state machine.

    Returns False on a state violation, leaving the entry untouched. On an
    accepted packet the state is updated and expiry refreshed. Works on any
    entry object with proto/state/expiry attributes.
    """
    new_state = next_state(entry.proto, entry.state, flags, direction)
    if new_state is None:
        return False
    entry.state = new_state
    entry.expiry = now + entry_timeout(entry.proto, new_state, timeouts)
    return True


@dataclass(slots=True)
class SessionEntry:
    """One flow's complete processing record.

    gwy_* is the flow's public (NATed) identity; for LAN-to-LAN flows it
    mirrors lan_* and no rewriting happens. Next hops are resolved once at
    creation; None means the routing table had no covering prefix, which
    surfaces as a NoRoute drop when that direction is used. The iface labels
    ride along so a forwarding verdict can be produced without a route lookup.
    """

    lan_addr: int
    lan_port: int
    gwy_addr: int
    gwy_port: int
    ext_addr: int
    ext_port: int
    proto: int
    state: SessionState
    expiry: float
    dscp: int = 0
    ext_next_hop: int | None = None
    lan_next_hop: int | None = None
    ext_iface: str | None = None
    lan_iface: str | None = None

    @property
    def outbound_key(self) -> Key:
        return (self.lan_addr, self.lan_port, self.ext_addr, self.ext_port, self.proto)

    @property
    def inbound_key(self) -> Key:
        return (self.gwy_addr, self.gwy_port, self.ext_addr, self.ext_port, self.proto)

    @property
    def is_nat(self) -> bool:
        return (self.gwy_addr, self.gwy_port) != (self.lan_addr, self.lan_port)


class DuplicateKeyError(RuntimeError):
    """Inserting an entry whose key is already live; a pipeline logic error."""


class TableFullError(RuntimeError):
    """The table is at capacity even after sweeping expired entries."""


DUMP_COLUMNS = (
    "lan_addr,lan_port,gwy_addr,gwy_port,ext_addr,ext_port,"
    "ip_proto,state,dscp,ext_next_hop,lan_next_hop,expiry"
)


class SessionTable:
    """Dual-indexed store of SessionEntry, capacity-bounded, lazily expired.

    An entry whose expiry <= now is dead: lookups treat it as a miss and
    purge it on the spot. Single-writer; callers supply logical time.
    """

    def __init__(self, capacity: int = 65536):
        self.capacity = capacity
        self._out: dict[Key, SessionEntry] = {}
        self._in: dict[Key, SessionEntry] = {}
        self.lookups = 0

    def __len__(self) -> int:
        return len(self._out)

    def _remove(self, entry: SessionEntry) -> None:
        del self._out[entry.outbound_key]
        del self._in[entry.inbound_key]

    def lookup_outbound(self, key: Key, now: float) -> SessionEntry | None:
        self.lookups += 1
        entry = self._out.get(key)
        if entry is None:
            return None
        if entry.expiry <= now:
            self._remove(entry)
            return None
        return entry

    def lookup_inbound(self, key: Key, now: float) -> SessionEntry | None:
        self.lookups += 1
        entry = self._in.get(key)
        if entry is None:
            return None
        if entry.expiry <= now:
            self._remove(entry)
            return None
        return entry

    def insert(self, entry: SessionEntry) -> None:
        if entry.outbound_key in self._out or entry.inbound_key in self._in:
            raise DuplicateKeyError(f"session key already present: {entry.outbound_key}")
        if len(self._out) >= self.capacity:
            raise TableFullError(f"table at capacity {self.capacity}")
        self._out[entry.outbound_key] = entry
        self._in[entry.inbound_key] = entry

    def ensure_capacity(self, now: float) -> None:
        """Make room for one insert, sweeping expired entries under pressure."""
        if len(self._out) < self.capacity:
            return
        self.sweep_expired(now)
        if len(self._out) >= self.capacity:
            raise TableFullError(f"table at capacity {self.capacity}")

    def port_in_use(
        self, gwy_addr: int, gwy_port: int, ext_addr: int, ext_port: int, proto: int, now: float
    ) -> bool:
        """Whether a public port is held by a live entry for this peer tuple."""
        entry = self._in.get((gwy_addr, gwy_port, ext_addr, ext_port, proto))
        if entry is None:
            return False
        if entry.expiry <= now:
            self._remove(entry)
            return False
        return True

    def sweep_expired(self, now: float) -> int:
        dead = [entry for entry in self._out.values() if entry.expiry <= now]
        for entry in dead:
            self._remove(entry)
        return len(dead)

    def reresolve_next_hops(self, routing_table) -> tuple[int, int]:
        """Recompute every live entry's next hops from a routing table.

        Entries left without a covering prefix on either side are evicted.
        Returns (updated_count, evicted_count).
        """
        updated = 0
        evicted = 0
        for entry in list(self._out.values()):
            ext_route = routing_table.lookup(entry.ext_addr)
            lan_route = routing_table.lookup(entry.lan_addr)
            if ext_route is None or lan_route is None:
                self._remove(entry)
                evicted += 1
                continue
            new_hops = (ext_route.next_hop, lan_route.next_hop)
            if new_hops != (entry.ext_next_hop, entry.lan_next_hop):
                updated += 1
            entry.ext_next_hop, entry.lan_next_hop = new_hops
            entry.ext_iface, entry.lan_iface = ext_route.iface, lan_route.iface
        return updated, evicted

    def dump_csv(self) -> str:
        """Entries as CSV, columns in table order plus expiry. Debug aid."""
        lines = [DUMP_COLUMNS]
        for e in self._out.values():
            lines.append(
                f"{format_ip(e.lan_addr)},{e.lan_port},{format_ip(e.gwy_addr)},{e.gwy_port},"
                f"{format_ip(e.ext_addr)},{e.ext_port},{e.proto},{e.state.value},{e.dscp},"
                f"{format_ip(e.ext_next_hop) if e.ext_next_hop is not None else '-'},"
                f"{format_ip(e.lan_next_hop) if e.lan_next_hop is not None else '-'},"
                f"{e.expiry}"
            )
        return "\n".join(lines) + "\n"
