"""Welfare-maximising clearing under national, zonal and nodal network models.

With inelastic demand, welfare maximisation is cost minimisation.  Unserved
energy is a slack priced at the value of lost load, so every clearing is
feasible.

Zonal model: one balance row per zone and hour.  Inside a zone power moves
freely, so intra-zonal flows cancel out of the zone balance and only the
cross-zonal lines are modelled, with DC angles at their endpoints and limits
``fraction * (1 - margin) * F``.  Flow arrays of a zonal outcome hold NaN on
intra-zonal lines.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import ZoneMap
from .lpmilp import ModelBuilder, solve_lp, solve_milp
from .market import Schedule, startup_indicators, variable_and_fixed_cost

TIE_BREAK = 1e-6
CONFIGS = ("national", "zonal", "nodal")


@dataclass
class ModelIndex:
    """Variable and row indices of a built clearing LP."""

    y: np.ndarray
    u: np.ndarray
    phi: np.ndarray          # -1 where no variable exists (first hour)
    q: np.ndarray
    theta: np.ndarray | None
    flow: np.ndarray | None
    node_rows: np.ndarray | None
    system_rows: np.ndarray | None
    zone_rows: np.ndarray | None
    line_caps: np.ndarray | None


@dataclass
class MarketOutcome:
    config: str
    schedule: Schedule
    served: np.ndarray
    unserved: np.ndarray
    objective: float
    generation_cost: float
    gap: float
    theta: np.ndarray | None = None
    flows: np.ndarray | None = None
    line_caps: np.ndarray | None = None
    zones: ZoneMap | None = None
    fraction: float = 1.0
    cuts: frozenset = frozenset()
    status: str = "optimal"
    node_limit_hit: bool = False

    @property
    def tag(self):
        if self.config == "zonal":
            return f"zonal({self.zones.k})"
        return self.config

    @property
    def total_unserved(self):
        return float(self.unserved.sum())


def line_caps_for(instance, config, zones=None, fraction=1.0):
    """Per-line |flow| caps (inf where unconstrained) for a configuration."""
    net = instance.network
    limits = net.effective_limits()
    if config == "nodal":
        return limits
    if config == "zonal":
        caps = np.full(len(net.lines), math.inf)
        for k, line in enumerate(net.lines):
            if zones.zone(line.from_node) != zones.zone(line.to_node):
                caps[k] = fraction * limits[k]
        return caps
    return None


def build_clearing_lp(instance, config, zones=None, fraction=1.0, *, relax=False,
                      fixed_commitment=None, cuts=frozenset(), tie_break=True,
                      served=None, line_caps=None, builder=False):
    """Assemble the clearing (MI)LP.

    ``fixed_commitment`` pins u to the given 0/1 matrix (IP pricing);
    ``relax`` drops integrality (convex-hull pricing); ``cuts`` holds
    (seller index, hour) pairs forced offline.  ``served`` fixes served
    demand instead of offering a lost-load slack (redispatch).  With
    ``builder=True`` the unbuilt :class:`ModelBuilder` is returned in place
    of the LP so callers can add variables and rows.
    """
    if config not in CONFIGS:
        raise ValueError(f"unknown configuration {config!r}")
    net = instance.network
    T = instance.n_hours
    S = len(instance.sellers)
    Bn = len(instance.buyers)
    N = len(net.nodes)
    L = len(net.lines)
    nidx = net.node_index()
    if config == "zonal":
        if zones is None:
            zones = instance.zones
        zones.validate(net)
    mb = ModelBuilder()
    y = np.empty((S, T), dtype=int)
    u = np.empty((S, T), dtype=int)
    phi = np.full((S, T), -1, dtype=int)
    for s, offer in enumerate(instance.sellers):
        pmax = offer.p_max_series(T)
        for t in range(T):
            cost = offer.var_cost + (TIE_BREAK * (s + 1) if tie_break else 0.0)
            y[s, t] = mb.add_var(f"y[{offer.seller_id},{t}]", 0.0, max(pmax[t], 0.0), cost)
            lo, hi = 0.0, 1.0
            if fixed_commitment is not None:
                lo = hi = float(round(fixed_commitment[s, t]))
            if (s, t) in cuts:
                hi = 0.0
                lo = min(lo, 0.0)
            binary = not relax and fixed_commitment is None
            u[s, t] = mb.add_var(f"u[{offer.seller_id},{t}]", lo, hi, offer.fixed_cost,
                                 binary=binary)
            if t > 0:
                phi[s, t] = mb.add_var(f"phi[{offer.seller_id},{t}]", 0.0, 1.0, 0.0)
        R = int(offer.min_uptime)
        for t in range(T):
            mb.add_row({y[s, t]: 1.0, u[s, t]: -offer.p_min}, ">=", 0.0, f"minout[{s},{t}]")
            mb.add_row({y[s, t]: 1.0, u[s, t]: -pmax[t]}, "<=", 0.0, f"maxout[{s},{t}]")
        for t in range(1, T):
            mb.add_row({phi[s, t]: 1.0, u[s, t]: -1.0, u[s, t - 1]: 1.0}, ">=", 0.0,
                       f"startup[{s},{t}]")
            window = [(phi[s, i], 1.0) for i in range(max(1, t - R + 1), t + 1)]
            window.append((u[s, t], -1.0))
            mb.add_row(window, "<=", 0.0, f"uptime[{s},{t}]")

    q = np.full((Bn, T), -1, dtype=int)
    if served is None:
        for b, buyer in enumerate(instance.buyers):
            for t in range(T):
                q[b, t] = mb.add_var(f"q[{buyer.buyer_id},{t}]", 0.0, buyer.profile[t],
                                     instance.voll)
        demand_b = np.array([b.profile for b in instance.buyers]).reshape(Bn, T)
    else:
        demand_b = np.asarray(served, dtype=float).reshape(Bn, T)

    theta = flow = node_rows = system_rows = zone_rows = None
    caps = None
    gen_at = [[] for _ in range(N)]
    for s, offer in enumerate(instance.sellers):
        gen_at[nidx[offer.node_id]].append(s)
    load_at = [[] for _ in range(N)]
    for b, buyer in enumerate(instance.buyers):
        load_at[nidx[buyer.node_id]].append(b)
    if config == "national":
        system_rows = np.empty(T, dtype=int)
        for t in range(T):
            coeffs = [(y[s, t], 1.0) for s in range(S)]
            coeffs += [(q[b, t], 1.0) for b in range(Bn) if q[b, t] >= 0]
            system_rows[t] = mb.add_row(coeffs, "==", float(demand_b[:, t].sum()),
                                        f"balance[{t}]")
    else:
        caps = line_caps if line_caps is not None else line_caps_for(instance, config, zones,
                                                                     fraction)
        if config == "zonal":
            modeled = [k for k, l in enumerate(net.lines)
                       if zones.zone(l.from_node) != zones.zone(l.to_node)]
        else:
            modeled = list(range(L))
        var_caps = caps
        if config == "nodal":
            # DC flows are acyclic, so no line carries more than the total supply;
            # caps above that cannot bind and are dropped to keep the LP well scaled.
            supply = max((sum(o.p_max_series(T)[t] for o in instance.sellers)
                          for t in range(T)), default=0.0)
            var_caps = np.where(caps > supply, math.inf, caps)
        theta, flow = _add_network(mb, net, modeled, var_caps, T)
        K = net.incidence()
        if config == "nodal":
            node_rows = np.empty((N, T), dtype=int)
            for n, node in enumerate(net.nodes):
                for t in range(T):
                    coeffs = [(y[s, t], 1.0) for s in gen_at[n]]
                    coeffs += [(q[b, t], 1.0) for b in load_at[n] if q[b, t] >= 0]
                    coeffs += [(flow[k, t], -K[n, k]) for k in np.flatnonzero(K[n])]
                    rhs = float(sum(demand_b[b, t] for b in load_at[n]))
                    node_rows[n, t] = mb.add_row(coeffs, "==", rhs, f"balance[{node.id},{t}]")
        else:
            # Zone balance: intra-zonal flows cancel, so only cross-zonal lines appear.
            zone_ids = zones.zones
            zone_rows = np.empty((len(zone_ids), T), dtype=int)
            for zi, z in enumerate(zone_ids):
                members = [nidx[n] for n in zones.members(z)]
                for t in range(T):
                    coeffs, rhs = {}, 0.0
                    for n in members:
                        for s in gen_at[n]:
                            coeffs[y[s, t]] = 1.0
                        for b in load_at[n]:
                            rhs += float(demand_b[b, t])
                            if q[b, t] >= 0:
                                coeffs[q[b, t]] = 1.0
                        for k in modeled:
                            if K[n, k]:
                                coeffs[flow[k, t]] = coeffs.get(flow[k, t], 0.0) - K[n, k]
                    zone_rows[zi, t] = mb.add_row(coeffs, "==", rhs, f"balance[{z},{t}]")
    idx = ModelIndex(y, u, phi, q, theta, flow, node_rows, system_rows, zone_rows, caps)
    return (mb if builder else mb.build()), idx


def _add_network(mb, net, modeled, caps, T):
    """Angle and flow variables plus DC rows for the lines in ``modeled``.

    Angles exist only at endpoints of modelled lines.  Without an angle box,
    one angle per connected piece of the modelled subgraph is pinned to 0.
    Unmodelled entries of the returned index arrays are -1.
    """
    nidx = net.node_index()
    N, L = len(net.nodes), len(net.lines)
    theta = np.full((N, T), -1, dtype=int)
    flow = np.full((L, T), -1, dtype=int)
    used = sorted({nidx[e] for k in modeled for e in (net.lines[k].from_node,
                                                      net.lines[k].to_node)})
    parent = {n: n for n in used}

    def find(a):
        while parent[a] != a:
            a = parent[a]
        return a

    for k in modeled:
        a, b = find(nidx[net.lines[k].from_node]), find(nidx[net.lines[k].to_node])
        if a != b:
            parent[max(a, b)] = min(a, b)
    ang = net.angle_limit
    for n in used:
        for t in range(T):
            if ang is not None:
                lo, hi = -ang, ang
            elif find(n) == n:
                lo = hi = 0.0
            else:
                lo, hi = -math.inf, math.inf
            theta[n, t] = mb.add_var(f"theta[{net.nodes[n].id},{t}]", lo, hi)
    for k in modeled:
        line = net.lines[k]
        a, b = nidx[line.from_node], nidx[line.to_node]
        for t in range(T):
            flow[k, t] = mb.add_var(f"f[{k},{t}]", -caps[k], caps[k])
            mb.add_row({flow[k, t]: 1.0, theta[a, t]: -line.susceptance,
                        theta[b, t]: line.susceptance}, "==", 0.0, f"dc[{k},{t}]")
    return theta, flow


def _take(x, index):
    if index is None:
        return None
    out = np.full(index.shape, np.nan)
    ok = index >= 0
    out[ok] = x[index[ok]]
    return out


def outcome_from_solution(instance, config, x, idx, *, gap=0.0, zones=None, fraction=1.0,
                          cuts=frozenset(), served=None, status="optimal", node_limit_hit=False):
    T = instance.n_hours
    y = np.maximum(x[idx.y], 0.0)
    y[np.abs(y) < 1e-9] = 0.0
    u = np.round(x[idx.u])
    sched = Schedule(y, u, startup_indicators(u))
    if served is None:
        unserved = np.maximum(x[idx.q], 0.0) if idx.q.size else np.zeros_like(idx.q, float)
        unserved[unserved < 1e-9] = 0.0
        demand = np.array([b.profile for b in instance.buyers]).reshape(len(instance.buyers), T)
        served_arr = demand - unserved
    else:
        served_arr = np.asarray(served, dtype=float)
        unserved = np.array([b.profile for b in instance.buyers]).reshape(served_arr.shape) \
            - served_arr
    gen_cost = sum(variable_and_fixed_cost(o, y[s], u[s]) for s, o in enumerate(instance.sellers))
    objective = gen_cost + instance.voll * float(unserved.sum())
    theta = _take(x, idx.theta)
    flows = _take(x, idx.flow)
    return MarketOutcome(config=config, schedule=sched, served=served_arr, unserved=unserved,
                         objective=objective, generation_cost=gen_cost, gap=gap, theta=theta,
                         flows=flows, line_caps=idx.line_caps,
                         zones=zones, fraction=fraction, cuts=frozenset(cuts), status=status,
                         node_limit_hit=node_limit_hit)


class ClearingError(RuntimeError):
    pass


def _clear(instance, config, zones, fraction, gap, cuts=frozenset()):
    lp, idx = build_clearing_lp(instance, config, zones, fraction, cuts=cuts)
    res = solve_milp(lp, gap=gap)
    if not res.optimal:
        raise ClearingError(f"{config} clearing failed: {res.status} {res.message}")
    return outcome_from_solution(instance, config, res.x, idx, gap=res.gap, zones=zones,
                                 fraction=fraction, cuts=cuts,
                                 node_limit_hit=res.node_limit_hit)


def clear_national(instance, gap=0.05, cuts=frozenset()):
    """Copper-plate clearing: one energy balance per hour, no network."""
    return _clear(instance, "national", ZoneMap.single(instance.network, "SYSTEM"), 1.0, gap,
                  cuts)


def clear_zonal(instance, zones=None, interconnector_fraction=0.8, gap=0.05, cuts=frozenset()):
    """Zone balances with cross-zonal lines limited to ``fraction * (1 - margin) * F``."""
    if not 0.0 < interconnector_fraction <= 1.0:
        raise ValueError("interconnector fraction must lie in (0, 1]")
    zones = instance.zones if zones is None else zones
    zones.validate(instance.network)
    return _clear(instance, "zonal", zones, interconnector_fraction, gap, cuts)


def clear_nodal(instance, gap=0.05, cuts=frozenset()):
    """Full DC-OPF clearing with every line limited to ``(1 - margin) * F``."""
    return _clear(instance, "nodal", ZoneMap.per_node(instance.network), 1.0, gap, cuts)


def clear(instance, config, zones=None, interconnector_fraction=0.8, gap=0.05,
          cuts=frozenset()):
    if config == "national":
        return clear_national(instance, gap, cuts)
    if config == "zonal":
        return clear_zonal(instance, zones, interconnector_fraction, gap, cuts)
    if config == "nodal":
        return clear_nodal(instance, gap, cuts)
    raise ValueError(f"unknown configuration {config!r}")
