"""Flow classification: map a session five-tuple to its DSCP."""

from __future__ import annotations

from dataclasses import dataclass

from flowgate.errors import ConfigError
from flowgate.matchers import TupleMatcher, parse_matcher
from flowgate.packet import SessionId


@dataclass(frozen=True, slots=True)
class QosRule:
    match: TupleMatcher
    dscp: int


@dataclass(frozen=True)
class QosPolicy:
    """Ordered rules, first match wins; unmatched flows get best-effort (0)."""

    rules: tuple[QosRule, ...]
    default_dscp: int = 0


def parse_qos(text: str) -> QosPolicy:
    """One rule per line: `<proto> <src_cidr> <src_ports> <dst_cidr> <dst_ports> dscp <0-63>`."""
    rules: list[QosRule] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split()
        if len(fields) != 7 or fields[5] != "dscp":
            raise ConfigError(f"line {lineno}: expected '<matcher...> dscp <value>'")
        if not fields[6].isdigit() or int(fields[6]) > 63:
            raise ConfigError(f"line {lineno}: dscp {fields[6]!r} out of range 0..63")
        rules.append(QosRule(parse_matcher(fields[:5], lineno), int(fields[6])))
    return QosPolicy(tuple(rules))


def classify(policy: QosPolicy, sid: SessionId) -> int:
    for rule in policy.rules:
        if rule.match.matches(sid):
            return rule.dscp
    return policy.default_dscp
