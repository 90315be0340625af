import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridclear.cases import ex_2n, ex_b, ex_b_zones
from gridclear.clearing import clear_nodal
from gridclear.grid import (Line, Network, Node, ZoneMap, cross_zonal_lines, dc_flows,
                            dc_power_flow, merge_parallel_lines, validate_network,
                            zone_capacities)


def two_nodes(b=10.0):
    return Network([Node("n"), Node("m")], [Line("n", "m", b, 50.0)], margin=0.0)


def test_equal_angles_no_flow():
    assert dc_flows(two_nodes(), {"n": [0.3], "m": [0.3]}).tolist() == [[0.0]]


def test_flow_is_susceptance_times_angle_difference():
    assert dc_flows(two_nodes(), {"n": 0.5, "m": 0.0})[0, 0] == pytest.approx(5.0)


def test_reversed_line_gives_opposite_flow():
    fwd = two_nodes()
    rev = Network(fwd.nodes, [Line("m", "n", 10.0, 50.0)], margin=0.0)
    angles = {"n": [0.2, -0.1], "m": [0.0, 0.4]}
    np.testing.assert_allclose(dc_flows(fwd, angles), -dc_flows(rev, angles))


def test_missing_angle_names_node():
    with pytest.raises(KeyError, match="'m'"):
        dc_flows(two_nodes(), {"n": [0.0]})
    with pytest.raises(KeyError, match="hour 1"):
        dc_flows(two_nodes(), {"n": [0.0, 0.0], "m": [0.0, np.nan]})


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3),
       st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.floats(-3, 3))
def test_flows_linear_in_angles(a, b, s):
    net = Network([Node("x"), Node("y"), Node("z")],
                  [Line("x", "y", 2.0, 1.0), Line("y", "z", 5.0, 1.0)])
    fa = dc_flows(net, dict(zip("xyz", a)))
    fb = dc_flows(net, dict(zip("xyz", b)))
    fab = dc_flows(net, {k: s * u + v for k, u, v in zip("xyz", a, b)})
    np.testing.assert_allclose(fab, s * fa + fb, atol=1e-9)


def test_ex_2n_nodal_flow_at_limit():
    out = clear_nodal(ex_2n(), gap=0.0)
    assert out.flows[0, 0] == pytest.approx(50.0)


def test_cross_zonal_lines_ex_b():
    net = ex_b().network
    assert cross_zonal_lines(net, ZoneMap.single(net)) == []
    two = cross_zonal_lines(net, ex_b_zones(2))
    assert [(l.from_node, l.to_node) for l in two] == [("v3", "v5"), ("v4", "v5")]
    three = cross_zonal_lines(net, ex_b_zones(3))
    assert [(l.from_node, l.to_node) for l in three] == [("v3", "v5")]
    assert zone_capacities(net, ex_b_zones(2)) == {("Z1", "Z2"): 150.0}
    assert zone_capacities(net, ex_b_zones(3)) == {("Z1", "Z2"): 50.0}


def test_validate_ex_b_components():
    report = validate_network(ex_b().network)
    assert report.errors == []
    comps = sorted(sorted(c) for c in report.components)
    assert comps == [["v1"], ["v2"], ["v3", "v4", "v5"], ["v6"]]


def test_validate_reports_errors():
    net = Network([Node("a"), Node("a"), Node("b")], [Line("a", "zz", 1.0, 1.0)])
    errors = validate_network(net).errors
    assert any("duplicate node id" in e for e in errors)
    assert any("unknown node 'zz'" in e for e in errors)
    bad = Network([Node("a"), Node("b")], [Line("a", "b", 0.0, -1.0)])
    assert len(validate_network(bad).errors) == 2


def test_margin_bounds_and_effective_limit():
    with pytest.raises(ValueError):
        Network([], [], margin=1.0)
    net = Network([Node("a"), Node("b")], [Line("a", "b", 1.0, 100.0)])
    assert net.effective_limits().tolist() == [80.0]


def test_parallel_lines_merge():
    merged = merge_parallel_lines([Line("a", "b", 1.0, 10.0), Line("b", "a", 2.0, 5.0),
                                   Line("a", "c", 1.0, 1.0)])
    assert merged == [Line("a", "b", 3.0, 15.0), Line("a", "c", 1.0, 1.0)]


def test_zone_map_validation():
    net = ex_b().network
    with pytest.raises(ValueError, match="misses"):
        ZoneMap({"v1": "Z"}).validate(net)
    assert ex_b_zones(3).k == 3


def test_power_flow_kirchhoff():
    net = Network([Node("a"), Node("b"), Node("c")],
                  [Line("a", "b", 1.0, 9.0), Line("b", "c", 2.0, 9.0), Line("a", "c", 1.0, 9.0)])
    inj = np.array([[30.0], [-10.0], [-20.0]])
    theta, flows, residual = dc_power_flow(net, inj)
    np.testing.assert_allclose(residual, 0.0, atol=1e-9)
    angles = {n: theta[i] for i, n in enumerate(net.node_ids)}
    np.testing.assert_allclose(dc_flows(net, angles), flows, atol=1e-9)


def test_susceptance_scaling_leaves_objective():
    inst = ex_2n()
    scaled = inst.replace(network=inst.network.scaled_susceptances(7.5))
    assert clear_nodal(scaled, 0.0).objective == pytest.approx(clear_nodal(inst, 0.0).objective)
