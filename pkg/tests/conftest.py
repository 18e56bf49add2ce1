from __future__ import annotations

import pytest

from tsnkit.network import route_all

from .helpers import direct_link, flow


@pytest.fixture
def single_hop():
    """Express (200 B, priority 0) and bp (1500 B, priority 1) on one 100 Mbit/s link."""
    net = direct_link()
    flows = [flow("express", 200, 0), flow("bp", 1500, 1)]
    return net, flows, route_all(net, flows)


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance verdict lines collected by tests/test_acceptance.py."""
    import sys

    module = sys.modules.get("tests.test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(module.RESULTS, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
