"""The two per-packet processing flows under comparison.

BaselinePipeline consults a NAT table, a bare connection-state table, the
QoS policy, and the routing table separately for every packet. Integrated-
Pipeline answers everything from one session-table lookup once a flow is
established. The two must produce observably identical verdict streams for
any trace; only the lookup accounting differs.

Both share one drop-reason precedence, enforced by running the same steps
in the same order on the slow (first-packet) path:
RuleDenied > StateViolation > NatExhausted > TableFull > NoRoute > TtlExpired.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from flowgate.filters import Action, RuleSet, evaluate
from flowgate.nat import NatConfig, NatPoolExhausted, NatTable, find_free_port
from flowgate.packet import (
    TCP,
    Cidr,
    Direction,
    Packet,
    SessionId,
    merge_dscp,
)
from flowgate.qos import QosPolicy, classify
from flowgate.routing import RoutingTable
from flowgate.session_table import (
    SessionEntry,
    SessionState,
    SessionTable,
    TableFullError,
    Timeouts,
    advance,
    entry_timeout,
    initial_state,
)


class DropReason(enum.Enum):
    RULE_DENIED = "rule_denied"
    STATE_VIOLATION = "state_violation"
    NO_ROUTE = "no_route"
    NAT_EXHAUSTED = "nat_exhausted"
    TABLE_FULL = "table_full"
    TTL_EXPIRED = "ttl_expired"
    INBOUND_NO_SESSION = "inbound_no_session"


@dataclass(frozen=True, slots=True)
class LookupAccounting:
    """Table consultations made for one packet."""

    nat_lookups: int = 0
    session_lookups: int = 0
    rule_evals: int = 0
    rules_scanned: int = 0
    qos_classifications: int = 0
    route_lookups: int = 0

    def total_consultations(self) -> int:
        """All table/policy consultations; scan depth is not a consultation."""
        return (
            self.nat_lookups
            + self.session_lookups
            + self.rule_evals
            + self.qos_classifications
            + self.route_lookups
        )


@dataclass(frozen=True, slots=True)
class Forwarded:
    next_hop: int
    iface: str
    packet: Packet


@dataclass(frozen=True, slots=True)
class Dropped:
    reason: DropReason


@dataclass(frozen=True, slots=True)
class Verdict:
    outcome: Forwarded | Dropped
    lookups: LookupAccounting


@dataclass(slots=True)
class StateEntry:
    """Bare connection-tracking record: five-tuple key, state, expiry only."""

    sid: SessionId
    proto: int
    state: SessionState
    expiry: float


class StateTable:
    """Single-index state table keyed on the LAN-side five-tuple."""

    def __init__(self, capacity: int = 65536):
        self.capacity = capacity
        self._entries: dict[SessionId, StateEntry] = {}
        self.lookups = 0

    def __len__(self) -> int:
        return len(self._entries)

    def lookup(self, sid: SessionId, now: float) -> StateEntry | None:
        self.lookups += 1
        entry = self._entries.get(sid)
        if entry is None:
            return None
        if entry.expiry <= now:
            del self._entries[sid]
            return None
        return entry

    def insert(self, entry: StateEntry) -> None:
        if entry.sid in self._entries:
            raise RuntimeError(f"state key already present: {entry.sid}")
        if len(self._entries) >= self.capacity:
            raise TableFullError(f"table at capacity {self.capacity}")
        self._entries[entry.sid] = entry

    def ensure_capacity(self, now: float) -> None:
        if len(self._entries) < self.capacity:
            return
        self.sweep_expired(now)
        if len(self._entries) >= self.capacity:
            raise TableFullError(f"table at capacity {self.capacity}")

    def sweep_expired(self, now: float) -> int:
        dead = [sid for sid, entry in self._entries.items() if entry.expiry <= now]
        for sid in dead:
            del self._entries[sid]
        return len(dead)


@dataclass
class RouterConfig:
    """Everything a pipeline instance needs, parsed and immutable."""

    lan_prefix: Cidr
    rules: RuleSet
    qos: QosPolicy
    routes: RoutingTable
    nat: NatConfig
    timeouts: Timeouts = field(default_factory=Timeouts)
    capacity: int = 65536


def _pure_syn(packet: Packet) -> bool:
    f = packet.flags
    return f.syn and not (f.ack or f.fin or f.rst)


# hit-path accounting never varies; shared instances keep the hot paths lean
_ONE_SESSION_LOOKUP = LookupAccounting(session_lookups=1)
_BASELINE_HIT_ACCT = LookupAccounting(
    nat_lookups=1, session_lookups=1, qos_classifications=1, route_lookups=1
)
_BASELINE_LOCAL_HIT_ACCT = LookupAccounting(
    session_lookups=1, qos_classifications=1, route_lookups=1
)


class BaselinePipeline:
    """Conventional flow: NAT, then state table, then QoS and routing per packet.

    The state table stores nothing but state+expiry, so classification and
    route lookup must be repeated for every single packet of a flow.
    """

    name = "baseline"

    def __init__(self, config: RouterConfig):
        self.config = config
        self.nat_table = NatTable()
        self.state_table = StateTable(config.capacity)
        self.session_hits = 0
        self.session_misses = 0

    def process(self, packet: Packet, now: float | None = None) -> Verdict:
        """Run one packet through the multi-table flow.

        Per packet, in order: NAT table lookup (inbound miss drops right
        here); state-table lookup; on miss, rule validation, NAT allocation
        and state insert; then QoS classification and a route lookup on the
        post-NAT destination, every packet; TTL is decremented last.
        """
        if now is None:
            now = packet.ts
        cfg = self.config
        sid = packet.sid
        nat_l = sess_l = rule_e = rules_s = qos_c = route_l = 0

        if cfg.lan_prefix.contains(sid.src_addr):
            # --- outbound ---
            lan_to_lan = cfg.lan_prefix.contains(sid.dst_addr)
            mapping = None
            if not lan_to_lan:
                nat_l += 1
                mapping = self.nat_table.lookup_forward(
                    (sid.src_addr, sid.src_port, sid.dst_addr, sid.dst_port, sid.proto), now
                )
            sess_l += 1
            is_hit = False
            entry = self.state_table.lookup(sid, now)
            if entry is not None:
                is_hit = True
                self.session_hits += 1
                if not lan_to_lan and mapping is None:
                    raise RuntimeError("live state entry without a live NAT mapping")
                if not advance(entry, packet.flags, Direction.OUTBOUND, now, cfg.timeouts):
                    return Verdict(
                        Dropped(DropReason.STATE_VIOLATION),
                        LookupAccounting(nat_l, sess_l, rule_e, rules_s, qos_c, route_l),
                    )
                if mapping is not None:
                    mapping.expiry = entry.expiry
            else:
                self.session_misses += 1
                rule_e += 1
                action, _, scanned = evaluate(cfg.rules, sid)
                rules_s += scanned
                if action is Action.DROP:
                    return Verdict(
                        Dropped(DropReason.RULE_DENIED),
                        LookupAccounting(nat_l, sess_l, rule_e, rules_s, qos_c, route_l),
                    )
                if sid.proto == TCP and not _pure_syn(packet):
                    return Verdict(
                        Dropped(DropReason.STATE_VIOLATION),
                        LookupAccounting(nat_l, sess_l, rule_e, rules_s, qos_c, route_l),
                    )
                state = initial_state(sid.proto)
                expiry = now + entry_timeout(sid.proto, state, cfg.timeouts)
                if not lan_to_lan:
                    try:
                        mapping = self.nat_table.allocate(
                            cfg.nat, sid.src_addr, sid.src_port,
                            sid.dst_addr, sid.dst_port, sid.proto, now, expiry,
                        )
                    except NatPoolExhausted:
                        return Verdict(
                            Dropped(DropReason.NAT_EXHAUSTED),
                            LookupAccounting(nat_l, sess_l, rule_e, rules_s, qos_c, route_l),
                        )
                try:
                    self.state_table.ensure_capacity(now)
                except TableFullError:
                    if mapping is not None:
                        self.nat_table.remove(mapping)  # undo; no state was created
                    return Verdict(
                        Dropped(DropReason.TABLE_FULL),
                        LookupAccounting(nat_l, sess_l, rule_e, rules_s, qos_c, route_l),
                    )
                self.state_table.insert(StateEntry(sid, sid.proto, state, expiry))

            dscp = classify(cfg.qos, sid)
            out_sid = (
                SessionId(mapping.gwy_addr, mapping.gwy_port, sid.dst_addr, sid.dst_port, sid.proto)
                if mapping is not None
                else sid
            )
            route = cfg.routes.lookup(out_sid.dst_addr)
            if is_hit:
                acct = _BASELINE_LOCAL_HIT_ACCT if lan_to_lan else _BASELINE_HIT_ACCT
            else:
                acct = LookupAccounting(nat_l, sess_l, rule_e, rules_s, qos_c + 1, route_l + 1)
            if route is None:
                return Verdict(Dropped(DropReason.NO_ROUTE), acct)
            ttl = packet.ttl - 1
            if ttl == 0:
                return Verdict(Dropped(DropReason.TTL_EXPIRED), acct)
            emitted = Packet(
                packet.ts, out_sid, merge_dscp(packet.tos, dscp), ttl, packet.flags,
                packet.payload_len,
            )
            return Verdict(Forwarded(route.next_hop, route.iface, emitted), acct)

        # --- inbound ---
        nat_l += 1
        mapping = self.nat_table.lookup_reverse(
            (sid.dst_addr, sid.dst_port, sid.src_addr, sid.src_port, sid.proto), now
        )
        if mapping is None:
            return Verdict(
                Dropped(DropReason.INBOUND_NO_SESSION),
                LookupAccounting(nat_l, sess_l, rule_e, rules_s, qos_c, route_l),
            )
        session_sid = SessionId(
            mapping.lan_addr, mapping.lan_port, sid.src_addr, sid.src_port, sid.proto
        )
        sess_l += 1
        entry = self.state_table.lookup(session_sid, now)
        if entry is None:
            # unreachable while mapping expiry mirrors the state entry's
            self.session_misses += 1
            return Verdict(
                Dropped(DropReason.INBOUND_NO_SESSION),
                LookupAccounting(nat_l, sess_l, rule_e, rules_s, qos_c, route_l),
            )
        self.session_hits += 1
        if not advance(entry, packet.flags, Direction.INBOUND, now, cfg.timeouts):
            return Verdict(
                Dropped(DropReason.STATE_VIOLATION),
                LookupAccounting(nat_l, sess_l, rule_e, rules_s, qos_c, route_l),
            )
        mapping.expiry = entry.expiry
        dscp = classify(cfg.qos, session_sid)
        in_sid = SessionId(sid.src_addr, sid.src_port, mapping.lan_addr, mapping.lan_port, sid.proto)
        route = cfg.routes.lookup(in_sid.dst_addr)
        acct = _BASELINE_HIT_ACCT
        if route is None:
            return Verdict(Dropped(DropReason.NO_ROUTE), acct)
        ttl = packet.ttl - 1
        if ttl == 0:
            return Verdict(Dropped(DropReason.TTL_EXPIRED), acct)
        emitted = Packet(
            packet.ts, in_sid, merge_dscp(packet.tos, dscp), ttl, packet.flags, packet.payload_len
        )
        return Verdict(Forwarded(route.next_hop, route.iface, emitted), acct)


class IntegratedPipeline:
    """Single-lookup flow: the session entry answers NAT, state, DSCP, and next hop.

    A flow's first packet pays the full slow path (rules, NAT allocation,
    classification, and a route lookup for each direction) to populate the
    entry; every later packet in either direction needs exactly one table
    lookup.
    """

    name = "integrated"

    def __init__(self, config: RouterConfig):
        self.config = config
        self.table = SessionTable(config.capacity)
        self.session_hits = 0
        self.session_misses = 0

    def process(self, packet: Packet, now: float | None = None) -> Verdict:
        if now is None:
            now = packet.ts
        cfg = self.config
        sid = packet.sid
        if cfg.lan_prefix.contains(sid.src_addr):
            return self._outbound(packet, sid, now)
        return self._inbound(packet, sid, now)

    def _hit_verdict(
        self,
        packet: Packet,
        entry: SessionEntry,
        direction: Direction,
        now: float,
        acct: LookupAccounting,
    ) -> Verdict:
        """Everything after a successful lookup: one shot, no further searches."""
        if not advance(entry, packet.flags, direction, now, self.config.timeouts):
            return Verdict(Dropped(DropReason.STATE_VIOLATION), acct)
        sid = packet.sid
        if direction is Direction.OUTBOUND:
            out_sid = (
                SessionId(entry.gwy_addr, entry.gwy_port, sid.dst_addr, sid.dst_port, sid.proto)
                if entry.is_nat
                else sid
            )
            next_hop, iface = entry.ext_next_hop, entry.ext_iface
        else:
            out_sid = SessionId(sid.src_addr, sid.src_port, entry.lan_addr, entry.lan_port, sid.proto)
            next_hop, iface = entry.lan_next_hop, entry.lan_iface
        if next_hop is None:
            return Verdict(Dropped(DropReason.NO_ROUTE), acct)
        ttl = packet.ttl - 1
        if ttl == 0:
            return Verdict(Dropped(DropReason.TTL_EXPIRED), acct)
        emitted = Packet(
            packet.ts, out_sid, merge_dscp(packet.tos, entry.dscp), ttl, packet.flags,
            packet.payload_len,
        )
        return Verdict(Forwarded(next_hop, iface, emitted), acct)

    def _outbound(self, packet: Packet, sid: SessionId, now: float) -> Verdict:
        cfg = self.config
        key = (sid.src_addr, sid.src_port, sid.dst_addr, sid.dst_port, sid.proto)
        entry = self.table.lookup_outbound(key, now)
        if entry is not None:
            self.session_hits += 1
            return self._hit_verdict(packet, entry, Direction.OUTBOUND, now, _ONE_SESSION_LOOKUP)

        # slow path: first packet of a flow
        self.session_misses += 1
        nat_l = rule_e = rules_s = qos_c = route_l = 0
        rule_e += 1
        action, _, scanned = evaluate(cfg.rules, sid)
        rules_s += scanned

        def acct() -> LookupAccounting:
            return LookupAccounting(nat_l, 1, rule_e, rules_s, qos_c, route_l)

        if action is Action.DROP:
            return Verdict(Dropped(DropReason.RULE_DENIED), acct())
        if sid.proto == TCP and not _pure_syn(packet):
            return Verdict(Dropped(DropReason.STATE_VIOLATION), acct())

        lan_to_lan = cfg.lan_prefix.contains(sid.dst_addr)
        if lan_to_lan:
            gwy_addr, gwy_port = sid.src_addr, sid.src_port
        else:
            nat_l += 1  # one allocation probe against the session table
            try:
                gwy_addr = cfg.nat.public_addr
                gwy_port = find_free_port(
                    cfg.nat, sid.dst_addr, sid.dst_port, sid.proto,
                    lambda p: self.table.port_in_use(
                        gwy_addr, p, sid.dst_addr, sid.dst_port, sid.proto, now
                    ),
                )
            except NatPoolExhausted:
                return Verdict(Dropped(DropReason.NAT_EXHAUSTED), acct())
        try:
            self.table.ensure_capacity(now)
        except TableFullError:
            return Verdict(Dropped(DropReason.TABLE_FULL), acct())

        qos_c += 1
        dscp = classify(cfg.qos, sid)
        route_l += 2  # both next hops are resolved and cached at creation
        ext_route = cfg.routes.lookup(sid.dst_addr)
        lan_route = cfg.routes.lookup(sid.src_addr)
        state = initial_state(sid.proto)
        entry = SessionEntry(
            lan_addr=sid.src_addr,
            lan_port=sid.src_port,
            gwy_addr=gwy_addr,
            gwy_port=gwy_port,
            ext_addr=sid.dst_addr,
            ext_port=sid.dst_port,
            proto=sid.proto,
            state=state,
            expiry=now + entry_timeout(sid.proto, state, cfg.timeouts),
            dscp=dscp,
            ext_next_hop=ext_route.next_hop if ext_route else None,
            lan_next_hop=lan_route.next_hop if lan_route else None,
            ext_iface=ext_route.iface if ext_route else None,
            lan_iface=lan_route.iface if lan_route else None,
        )
        self.table.insert(entry)

        if entry.ext_next_hop is None:
            return Verdict(Dropped(DropReason.NO_ROUTE), acct())
        ttl = packet.ttl - 1
        if ttl == 0:
            return Verdict(Dropped(DropReason.TTL_EXPIRED), acct())
        out_sid = (
            SessionId(gwy_addr, gwy_port, sid.dst_addr, sid.dst_port, sid.proto)
            if entry.is_nat
            else sid
        )
        emitted = Packet(
            packet.ts, out_sid, merge_dscp(packet.tos, dscp), ttl, packet.flags,
            packet.payload_len,
        )
        return Verdict(Forwarded(entry.ext_next_hop, entry.ext_iface, emitted), acct())

    def _inbound(self, packet: Packet, sid: SessionId, now: float) -> Verdict:
        key = (sid.dst_addr, sid.dst_port, sid.src_addr, sid.src_port, sid.proto)
        entry = self.table.lookup_inbound(key, now)
        if entry is None:
            # inbound-initiated flows are not accepted; the miss is terminal
            self.session_misses += 1
            return Verdict(Dropped(DropReason.INBOUND_NO_SESSION), _ONE_SESSION_LOOKUP)
        self.session_hits += 1
        return self._hit_verdict(packet, entry, Direction.INBOUND, now, _ONE_SESSION_LOOKUP)
