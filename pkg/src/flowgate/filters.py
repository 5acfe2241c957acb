"""First-match accept/drop rule evaluation over session five-tuples."""

from __future__ import annotations

import enum
from dataclasses import dataclass

from flowgate.errors import ConfigError
from flowgate.matchers import TupleMatcher, parse_matcher
from flowgate.packet import SessionId


class Action(enum.Enum):
    ACCEPT = "accept"
    DROP = "drop"


@dataclass(frozen=True, slots=True)
class FilterRule:
    action: Action
    match: TupleMatcher


@dataclass(frozen=True)
class RuleSet:
    """Ordered rules, first match wins; no match falls through to default deny."""

    rules: tuple[FilterRule, ...]
    default: Action = Action.DROP


def parse_rules(text: str) -> RuleSet:
    """One rule per line: `<accept|drop> <proto> <src_cidr> <src_ports> <dst_cidr> <dst_ports>`."""
    rules: list[FilterRule] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = stripped.split()
        if len(fields) != 6:
            raise ConfigError(f"line {lineno}: expected 6 fields, got {len(fields)}")
        try:
            action = Action(fields[0])
        except ValueError:
            raise ConfigError(f"line {lineno}: unknown action {fields[0]!r}") from None
        rules.append(FilterRule(action, parse_matcher(fields[1:], lineno)))
    return RuleSet(tuple(rules))


def evaluate(ruleset: RuleSet, sid: SessionId) -> tuple[Action, int | None, int]:
    """First-match evaluation.

    Returns (action, matched rule index or None, rules scanned). The scan
    count includes the matching rule; a default-action outcome scanned them all.
    """
    for index, rule in enumerate(ruleset.rules):
        if rule.match.matches(sid):
            return rule.action, index, index + 1
    return ruleset.default, None, len(ruleset.rules)
