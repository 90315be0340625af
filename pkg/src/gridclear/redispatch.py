"""Redispatch of a zonal or national outcome into a physically feasible one.

Demand stays at the served quantities of the market outcome; only sellers
move.  Commitment may change, so redispatch is a MILP over the full
unit-commitment polytope with the nodal network constraints.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clearing import MarketOutcome, build_clearing_lp, outcome_from_solution
from .grid import dc_power_flow
from .lpmilp import solve_milp
from .market import variable_and_fixed_cost

FLOW_CAPS = ("zonal_flows", "physical")
_SECONDARY = 1e-6


class RedispatchInfeasible(RuntimeError):
    pass


@dataclass
class RedispatchResult:
    outcome: MarketOutcome        # the redispatched, network-feasible outcome
    cost: float                   # sum_s |c_s(final) - c_s(market)|
    volume: float                 # sum_s sum_t |y_final - y_market|
    up: np.ndarray                # seller x hour increases (MWh)
    down: np.ndarray              # seller x hour decreases (MWh)
    seller_cost_change: np.ndarray
    flow_cap: str
    objective: str
    system_cost: float            # generation cost of the market outcome
    gap: float = 0.0

    @property
    def schedule(self):
        return self.outcome.schedule

    @property
    def flows(self):
        return self.outcome.flows

    @property
    def total_cost(self):
        return self.system_cost + self.cost


def _redispatch(instance, outcome, flow_cap, gap, objective):
    if flow_cap not in FLOW_CAPS:
        raise ValueError(f"flow_cap must be one of {FLOW_CAPS}")
    sched = outcome.schedule
    S, T = sched.dispatch.shape
    if S != len(instance.sellers) or T != instance.n_hours:
        raise ValueError("outcome does not match the instance")
    mb, idx = build_clearing_lp(instance, "nodal", served=outcome.served, tie_break=False,
                                builder=True)
    mb.clear_costs()
    net = instance.network
    if flow_cap == "zonal_flows" and outcome.config == "zonal" and outcome.flows is not None:
        zones = outcome.zones
        for k, line in enumerate(net.lines):
            if zones.zone(line.from_node) == zones.zone(line.to_node):
                continue
            for t in range(T):
                cap = abs(float(outcome.flows[k, t]))
                j = idx.flow[k, t]
                mb.tighten(j, -cap, cap)
    y_mkt, u_mkt = sched.dispatch, sched.commitment
    market_cost = np.array([variable_and_fixed_cost(o, y_mkt[s], u_mkt[s])
                            for s, o in enumerate(instance.sellers)])
    w_cost, w_vol = (1.0, _SECONDARY) if objective == "cost" else (_SECONDARY, 1.0)
    up = np.empty((S, T), dtype=int)
    down = np.empty((S, T), dtype=int)
    for s, offer in enumerate(instance.sellers):
        for t in range(T):
            up[s, t] = mb.add_var(f"up[{offer.seller_id},{t}]", cost=w_vol)
            down[s, t] = mb.add_var(f"down[{offer.seller_id},{t}]", cost=w_vol)
            mb.add_row({idx.y[s, t]: 1.0, up[s, t]: -1.0, down[s, t]: 1.0}, "==",
                       float(y_mkt[s, t]), f"delta[{offer.seller_id},{t}]")
        dev = mb.add_var(f"costdev[{offer.seller_id}]", cost=w_cost)
        expr = [(idx.y[s, t], offer.var_cost) for t in range(T)]
        expr += [(idx.u[s, t], offer.fixed_cost) for t in range(T)]
        mb.add_row(expr + [(dev, -1.0)], "<=", float(market_cost[s]),
                   f"costdev_hi[{offer.seller_id}]")
        mb.add_row(expr + [(dev, 1.0)], ">=", float(market_cost[s]),
                   f"costdev_lo[{offer.seller_id}]")
    res = solve_milp(mb.build(), gap=gap)
    if not res.optimal:
        hint = (" under the zonal-flow caps; retry with flow_cap='physical'"
                if flow_cap == "zonal_flows" else " with demand held at the served quantities")
        raise RedispatchInfeasible(f"no network-feasible redispatch exists{hint}")
    final = outcome_from_solution(instance, "nodal", res.x, idx, gap=res.gap,
                                  zones=outcome.zones, served=outcome.served,
                                  node_limit_hit=res.node_limit_hit)
    y_new = final.schedule.dispatch
    new_cost = np.array([variable_and_fixed_cost(o, y_new[s], final.schedule.commitment[s])
                         for s, o in enumerate(instance.sellers)])
    delta = y_new - y_mkt
    change = new_cost - market_cost
    return RedispatchResult(
        outcome=final, cost=float(np.abs(change).sum()), volume=float(np.abs(delta).sum()),
        up=np.maximum(delta, 0.0), down=np.maximum(-delta, 0.0), seller_cost_change=change,
        flow_cap=flow_cap, objective=objective, system_cost=outcome.generation_cost,
        gap=res.gap)


def redispatch_min_cost(instance, outcome, flow_cap="zonal_flows", gap=0.05):
    """Cheapest network-feasible adjustment, measured as sum of |cost changes|."""
    return _redispatch(instance, outcome, flow_cap, gap, "cost")


def redispatch_min_volume(instance, outcome, flow_cap="zonal_flows", gap=0.05):
    """Smallest total |output change|; the cost is evaluated afterwards."""
    return _redispatch(instance, outcome, flow_cap, gap, "volume")


@dataclass(frozen=True)
class LineViolation:
    line: int
    from_node: str
    to_node: str
    hour: int
    flow: float
    limit: float

    @property
    def excess(self):
        return abs(self.flow) - self.limit


@dataclass(frozen=True)
class BalanceViolation:
    node: str
    hour: int
    residual: float


@dataclass
class FeasibilityReport:
    lines: list = field(default_factory=list)
    balances: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.lines and not self.balances

    def __len__(self):
        return len(self.lines) + len(self.balances)


def node_injections(instance, schedule, served):
    net = instance.network
    nidx = net.node_index()
    inj = np.zeros((len(net.nodes), instance.n_hours))
    for s, offer in enumerate(instance.sellers):
        inj[nidx[offer.node_id]] += schedule.dispatch[s]
    for b, buyer in enumerate(instance.buyers):
        inj[nidx[buyer.node_id]] -= served[b]
    return inj


def feasibility_check(instance, outcome, tol=1e-6):
    """Physical flows of the outcome's injections against ``(1 - margin) * F``.

    Flows are recomputed from injections, so the check does not trust any
    flow values carried by the outcome.  Components whose injections do not
    balance show up as balance residuals.
    """
    net = instance.network
    served = np.asarray(outcome.served, dtype=float).reshape(len(instance.buyers),
                                                             instance.n_hours)
    if outcome.schedule.dispatch.shape != (len(instance.sellers), instance.n_hours):
        raise ValueError("outcome schedule does not match the instance")
    inj = node_injections(instance, outcome.schedule, served)
    _, flows, residual = dc_power_flow(net, inj)
    limits = net.effective_limits()
    report = FeasibilityReport()
    for k, line in enumerate(net.lines):
        for t in range(instance.n_hours):
            if abs(flows[k, t]) > limits[k] + tol * max(1.0, limits[k]):
                report.lines.append(LineViolation(k, line.from_node, line.to_node,
                                                  instance.hours[t], float(flows[k, t]),
                                                  float(limits[k])))
    for n, node in enumerate(net.nodes):
        for t in range(instance.n_hours):
            if abs(residual[n, t]) > tol * max(1.0, np.abs(inj[:, t]).max(initial=0.0)):
                report.balances.append(BalanceViolation(node.id, instance.hours[t],
                                                        float(residual[n, t])))
    return report
