"""Shared fixtures: a small canonical router config and packet builders."""

from __future__ import annotations

import pytest

from flowgate.filters import parse_rules
from flowgate.nat import parse_nat_config
from flowgate.packet import Cidr, Packet, load_trace, parse_trace_record
from flowgate.pipelines import RouterConfig
from flowgate.qos import parse_qos
from flowgate.routing import parse_routes
from flowgate.session_table import Timeouts

DEFAULT_RULES = "accept any any any any any\n"
DEFAULT_ROUTES = "0.0.0.0/0 203.0.113.1 wan\n10.0.0.0/8 10.0.0.254 lan\n"
DEFAULT_NAT = "public 192.0.2.1\nports 40000-49999\n"
DEFAULT_QOS = "udp any any any 53 dscp 46\ntcp any any any 22 dscp 10\n"
DEFAULT_LAN = "10.0.0.0/8"


def make_config(
    rules: str = DEFAULT_RULES,
    routes: str = DEFAULT_ROUTES,
    nat: str = DEFAULT_NAT,
    qos: str = DEFAULT_QOS,
    lan: str = DEFAULT_LAN,
    timeouts: Timeouts | None = None,
    capacity: int = 65536,
) -> RouterConfig:
    return RouterConfig(
        lan_prefix=Cidr.parse(lan),
        rules=parse_rules(rules),
        qos=parse_qos(qos),
        routes=parse_routes(routes),
        nat=parse_nat_config(nat),
        timeouts=timeouts or Timeouts(),
        capacity=capacity,
    )


def pkt(line: str) -> Packet:
    return parse_trace_record(line)


def trace(text: str) -> list[Packet]:
    return load_trace(text)


@pytest.fixture
def config() -> RouterConfig:
    return make_config()


# --- acceptance reporting -------------------------------------------------
# test_acceptance.py records one line per criterion; printed after the run.

ACCEPTANCE_RESULTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
