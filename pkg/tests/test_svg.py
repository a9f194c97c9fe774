import xml.etree.ElementTree as ET

from leosplit import svg
from leosplit.sim import simulate_times


def test_line_chart_is_valid_and_deterministic():
    a = svg.line_chart(["0.2", "0.4"], {"astar": [3.0, 2.0], "ground--only": [None, 5.0]}, "T", "x", "y")
    assert a == svg.line_chart(["0.2", "0.4"], {"astar": [3.0, 2.0], "ground--only": [None, 5.0]}, "T", "x", "y")
    root = ET.fromstring(a)
    assert root.tag.endswith("svg")
    assert "<!-- data" in a and "astar" in a


def test_bar_chart_and_gantt_parse():
    ET.fromstring(svg.bar_chart(["a", "b<c"], [1.0, 20.0], "Ratios & more", "x"))
    tr = simulate_times(1.0, [2.0, 2.0], [1.0, 0.5], 3)
    g = svg.gantt(tr)
    ET.fromstring(g)
    assert g.count("<rect") == 1 + 3 * 5
