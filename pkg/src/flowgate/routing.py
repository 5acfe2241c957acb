"""Static routing table with longest-prefix-match lookup."""

from __future__ import annotations

from dataclasses import dataclass

from flowgate.errors import ConfigError
from flowgate.packet import Cidr, parse_ip


@dataclass(frozen=True, slots=True)
class RouteEntry:
    prefix: Cidr
    next_hop: int
    iface: str


class RoutingTable:
    """Immutable after construction; lookup returns the longest covering prefix.

    Entries are bucketed by prefix length so a lookup probes one exact-match
    dict per occupied length, most specific first.
    """

    def __init__(self, entries: list[RouteEntry]):
        self._by_len: dict[int, dict[int, RouteEntry]] = {}
        for entry in entries:
            bucket = self._by_len.setdefault(entry.prefix.prefix_len, {})
            if entry.prefix.network in bucket:
                raise ValueError(f"duplicate prefix {entry.prefix}")
            bucket[entry.prefix.network] = entry
        # (length, shift, bucket) triples, most specific first
        self._probe = [
            (length, 32 - length, self._by_len[length])
            for length in sorted(self._by_len, reverse=True)
        ]
        self.entries = tuple(entries)

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, dst: int) -> RouteEntry | None:
        for length, shift, bucket in self._probe:
            if length == 0:
                return next(iter(bucket.values()))
            entry = bucket.get((dst >> shift) << shift)
            if entry is not None:
                return entry
        return None


def parse_routes(text: str) -> RoutingTable:
    """One route per line: `<cidr> <next_hop_ip> <iface>`. Duplicate prefixes rejected."""
    entries: list[RouteEntry] = []
    seen: set[Cidr] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split()
        if len(fields) != 3:
            raise ConfigError(f"line {lineno}: expected '<cidr> <next_hop> <iface>'")
        try:
            prefix = Cidr.parse(fields[0])
            next_hop = parse_ip(fields[1])
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc
        if prefix in seen:
            raise ConfigError(f"line {lineno}: duplicate prefix {prefix}")
        seen.add(prefix)
        entries.append(RouteEntry(prefix, next_hop, fields[2]))
    return RoutingTable(entries)
