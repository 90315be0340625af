import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridclear.cases import ex_2n, ex_b_zones
from gridclear.clearing import clear_national, clear_nodal
from gridclear.grid import ZoneMap
from gridclear.ingest import gen_synthetic
from gridclear.pricing import PriceSurface, ip_prices
from gridclear.reporting import price_stats, variance_decomposition


def nodal_surface(values, nodes=None):
    values = np.asarray(values, dtype=float)
    nodes = nodes or [f"n{i}" for i in range(values.shape[0])]
    return PriceSurface("nodal", nodes, tuple(range(values.shape[1])), values, "ip",
                        {n: n for n in nodes})


def test_two_point_stats():
    s = price_stats([10.0, 30.0])
    assert (s.mean, s.median, s.std, s.outliers) == (20.0, 20.0, 10.0, 0)


def test_cap_applied_before_stats():
    s = price_stats([50.0, 150.0], cap=100.0)
    assert s.mean == 75.0 and s.outliers == 1 and s.std == 25.0


def test_empty_series_rejected():
    with pytest.raises(ValueError):
        price_stats([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-500, 500), min_size=1, max_size=40), st.randoms())
def test_stats_order_invariant(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    a, b = price_stats(values), price_stats(shuffled)
    assert a.mean == pytest.approx(b.mean) and a.median == b.median
    assert a.std == pytest.approx(b.std, abs=1e-9) and a.outliers == b.outliers


def test_ex_2n_decomposition():
    inst = ex_2n()
    p = ip_prices(inst, clear_nodal(inst, 0.0))
    vd = variance_decomposition(p)
    assert vd.congestion.tolist() == pytest.approx([10.0])
    assert vd.temporal.tolist() == [0.0, 0.0]
    assert price_stats(p).std == pytest.approx(10.0)


def test_two_hour_arithmetic():
    vd = variance_decomposition(nodal_surface([[10.0, 20.0], [30.0, 20.0]]))
    assert vd.congestion.tolist() == [10.0, 0.0]
    assert vd.temporal.tolist() == [5.0, 5.0]


def test_uniform_prices_zero():
    vd = variance_decomposition(nodal_surface(np.full((4, 3), 42.0)),
                                ZoneMap({"n0": "a", "n1": "a", "n2": "b", "n3": "b"}))
    assert not vd.congestion.any() and not vd.temporal.any()
    assert vd.zone_congestion == {"a": 0.0, "b": 0.0}


def test_zone_grouping():
    nodes = ["v1", "v2", "v3", "v4", "v5", "v6"]
    vals = np.array([[1.0], [3.0], [1.0], [3.0], [5.0], [7.0]])
    vd = variance_decomposition(nodal_surface(vals, nodes), ex_b_zones(2))
    assert vd.zone_congestion == {"Z1": 1.0, "Z2": 1.0}


def test_non_nodal_rejected():
    inst = ex_2n()
    with pytest.raises(ValueError):
        variance_decomposition(ip_prices(inst, clear_national(inst, 0.0)))


@pytest.mark.parametrize("seed", range(3))
def test_no_congestion_no_congestion_std(seed):
    inst = gen_synthetic(seed, 5, 4, 3, 0.5)
    inst = inst.replace(network=inst.network.with_limits(1e7))
    vd = variance_decomposition(ip_prices(inst, clear_nodal(inst, 0.0)))
    assert np.all(vd.congestion <= 1e-6)
