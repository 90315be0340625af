"""Prices for a cleared outcome and the settlement of every participant.

Rules:

``ip``    duals of the clearing LP with the commitment fixed at the outcome's
``ch``    duals of the continuous relaxation of the clearing problem
``join``  prices minimising, over all sellers, max(LLOC, MWP) plus the
          network operator's lost opportunity

Settlement quantities at given prices:

``utility``  revenue minus cost at the cleared quantities
``mwp``      make-whole payment, max(-utility, 0)
``lloc``     best profit with the commitment held fixed, minus utility
``gloc``     best profit over the whole unit-commitment polytope, minus utility

The network operator buys at one end of each line and sells at the other,
so its utility is the congestion rent; its best response is the rent of the
most valuable feasible flow pattern (a linear program, so GLOC = LLOC).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .clearing import build_clearing_lp
from .grid import ZoneMap
from .lpmilp import ModelBuilder, solve_lp, solve_milp
from .market import build_uc_constraints, variable_and_fixed_cost

RULES = ("ip", "ch", "join", "euphemia")
PRICE_BOUND_FACTOR = 10.0   # join prices live in [-f * voll, f * voll]


class PricingError(RuntimeError):
    pass


@dataclass
class PriceSurface:
    """One price per location and hour."""

    granularity: str          # national | zonal | nodal
    locations: tuple
    hours: tuple
    values: np.ndarray        # locations x hours (EUR/MWh)
    rule: str
    node_location: dict       # node id -> location id
    objective: float | None = None

    def __post_init__(self):
        self.locations = tuple(self.locations)
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.locations),
                                                                   len(self.hours))
        if not np.all(np.isfinite(self.values)):
            raise PricingError("prices must be finite")

    def at(self, node_id):
        """Hourly prices seen at a node."""
        try:
            loc = self.node_location[node_id]
        except KeyError:
            raise PricingError(f"no price for node {node_id!r}") from None
        return self.values[self.locations.index(loc)]

    def node_prices(self, network):
        return np.vstack([self.at(n) for n in network.node_ids]) if network.nodes else \
            np.zeros((0, len(self.hours)))

    def with_values(self, values, rule=None):
        return PriceSurface(self.granularity, self.locations, self.hours, values,
                            rule or self.rule, dict(self.node_location))


def _granularity(config):
    return {"national": "national", "zonal": "zonal", "nodal": "nodal"}[config]


def _surface(instance, outcome, x_duals, idx, rule):
    net = instance.network
    if outcome.config == "national":
        locs = ("SYSTEM",)
        values = x_duals[idx.system_rows][None, :]
        mapping = {n: "SYSTEM" for n in net.node_ids}
    elif outcome.config == "zonal":
        locs = tuple(outcome.zones.zones)
        values = x_duals[idx.zone_rows]
        mapping = dict(outcome.zones.mapping)
    else:
        locs = tuple(net.node_ids)
        values = x_duals[idx.node_rows]
        mapping = {n: n for n in net.node_ids}
    values = np.where(np.abs(values) < 1e-9, 0.0, values)
    return PriceSurface(_granularity(outcome.config), locs, instance.hours, values, rule, mapping)


def _zones_of(outcome, instance):
    if outcome.zones is not None:
        return outcome.zones
    return ZoneMap.single(instance.network)


def _dual_lp(instance, outcome, **kw):
    lp, idx = build_clearing_lp(instance, outcome.config, _zones_of(outcome, instance),
                                outcome.fraction, tie_break=False, **kw)
    res = solve_lp(lp)
    if not res.optimal:
        raise PricingError(f"pricing LP is {res.status}")
    return res, idx


def ip_prices(instance, outcome):
    """Duals of the balance rows with the commitment fixed at the outcome's."""
    res, idx = _dual_lp(instance, outcome, fixed_commitment=outcome.schedule.commitment,
                        cuts=outcome.cuts)
    return _surface(instance, outcome, res.duals, idx, "ip")


def ch_prices(instance, outcome):
    """Duals of the balance rows of the continuous relaxation."""
    res, idx = _dual_lp(instance, outcome, relax=True)
    return _surface(instance, outcome, res.duals, idx, "ch")


# ---------------------------------------------------------------------------
# Network operator


@dataclass
class NetworkModel:
    """The flow set a configuration's market operator can use."""

    lines: list            # indices of modelled lines
    caps: np.ndarray       # per modelled line (inf = uncapped)
    flows: np.ndarray      # cleared flows, modelled lines x hours


def network_model(instance, outcome):
    if outcome.config == "national" or outcome.flows is None:
        return None
    modeled = [k for k in range(len(instance.network.lines))
               if not np.isnan(outcome.flows[k]).any()]
    caps = np.asarray(outcome.line_caps, dtype=float)[modeled]
    return NetworkModel(modeled, caps, np.asarray(outcome.flows)[modeled])


def _line_weights(instance, model, prices, t):
    net = instance.network
    return np.array([prices.at(net.lines[k].to_node)[t] - prices.at(net.lines[k].from_node)[t]
                     for k in model.lines])


def best_network_rent(instance, model, weights):
    """max sum(w * f) over DC-feasible flows on the modelled lines (one hour)."""
    net = instance.network
    mb = ModelBuilder(maximize=True)
    theta = {}
    ang = net.angle_limit
    for k in model.lines:
        for end in (net.lines[k].from_node, net.lines[k].to_node):
            if end not in theta:
                lo, hi = (-ang, ang) if ang is not None else (-math.inf, math.inf)
                theta[end] = mb.add_var(f"theta[{end}]", lo, hi)
    if ang is None:
        for comp in net.components():
            first = next((n for n in comp if n in theta), None)
            if first is not None:
                mb.tighten(theta[first], 0.0, 0.0)
    for i, k in enumerate(model.lines):
        line = net.lines[k]
        f = mb.add_var(f"f[{k}]", -model.caps[i], model.caps[i], weights[i])
        mb.add_row({f: 1.0, theta[line.from_node]: -line.susceptance,
                    theta[line.to_node]: line.susceptance}, "==", 0.0)
    res = solve_lp(mb.build())
    if res.status == "unbounded":
        return math.inf
    if not res.optimal:
        raise PricingError(f"network best response is {res.status}")
    return res.objective


def network_lloc(instance, outcome, prices, model=None):
    model = network_model(instance, outcome) if model is None else model
    if model is None or not model.lines:
        return 0.0, 0.0
    best = actual = 0.0
    for t in range(instance.n_hours):
        w = _line_weights(instance, model, prices, t)
        actual += float(w @ model.flows[:, t])
        best += best_network_rent(instance, model, w)
    return max(best - actual, 0.0), actual


# ---------------------------------------------------------------------------
# Seller best responses


def hourly_margin(offer, price, n_hours):
    """Best per-hour operating profit when on, and the output achieving it."""
    pmax = offer.p_max_series(n_hours)
    margin = np.asarray(price, dtype=float) - offer.var_cost
    at_max = margin * pmax
    at_min = margin * offer.p_min
    y = np.where(at_max >= at_min, pmax, offer.p_min)
    feasible = pmax >= offer.p_min - 1e-9
    return np.maximum(at_max, at_min) - offer.fixed_cost, y, feasible


def best_response_dp(offer, price, n_hours):
    """Profit-maximising schedule over the unit-commitment polytope.

    States after each hour: off, or on with ``k`` more hours of committed
    uptime still owed (a start after the first hour owes ``min_uptime - 1``).
    Returns (profit, dispatch, commitment).
    """
    gain, y_on, feasible = hourly_margin(offer, price, n_hours)
    R = int(offer.min_uptime)
    n_states = R + 1                  # 0 = off, 1 + k = on owing k hours
    NEG = -math.inf
    value = np.full((n_hours, n_states), NEG)
    back = np.zeros((n_hours, n_states), dtype=int)
    for t in range(n_hours):
        for prev in range(n_states) if t else [None]:
            base = 0.0 if prev is None else value[t - 1, prev]
            if base == NEG:
                continue
            owed = -1 if prev in (None, 0) else prev - 1
            moves = []
            if owed <= 0:
                moves.append((0, base))
            if feasible[t]:
                if owed == -1:
                    new_owed = 0 if t == 0 else R - 1
                else:
                    new_owed = max(owed - 1, 0)
                moves.append((1 + new_owed, base + gain[t]))
            for state, val in moves:
                if val > value[t, state] + 1e-12:
                    value[t, state] = val
                    back[t, state] = -1 if prev is None else prev
    state = int(np.argmax(value[-1])) if n_hours else 0
    best = float(value[-1, state]) if n_hours else 0.0
    u = np.zeros(n_hours)
    for t in range(n_hours - 1, -1, -1):
        u[t] = 1.0 if state > 0 else 0.0
        state = back[t, state]
    return best, np.where(u > 0, y_on, 0.0), u


def best_response_milp(offer, price, n_hours):
    """Same best response as :func:`best_response_dp`, solved as a MILP."""
    mb = ModelBuilder(maximize=True)
    price = np.asarray(price, dtype=float)
    pmax = offer.p_max_series(n_hours)
    var = {}
    for t in range(n_hours):
        var["y", t] = mb.add_var(f"y[{t}]", 0.0, max(pmax[t], 0.0), price[t] - offer.var_cost)
        var["u", t] = mb.add_var(f"u[{t}]", cost=-offer.fixed_cost, binary=True)
        var["phi", t] = mb.add_var(f"phi[{t}]", 0.0, 1.0 if t else 0.0)
    for row in build_uc_constraints(offer, n_hours):
        mb.add_row({var[k]: a for k, a in row.coeffs.items()}, row.sense, row.rhs, row.label)
    res = solve_milp(mb.build(), gap=0.0)
    if not res.optimal:
        raise PricingError(f"best response of {offer.seller_id} is {res.status}")
    y = np.array([res.x[var["y", t]] for t in range(n_hours)])
    u = np.round([res.x[var["u", t]] for t in range(n_hours)])
    return max(res.objective, 0.0), y, u


# ---------------------------------------------------------------------------
# Settlement


@dataclass
class ParticipantSettlement:
    participant: str
    kind: str               # seller | buyer | network
    utility: float
    gloc: float
    lloc: float
    mwp: float
    revenue: float = 0.0
    cost: float = 0.0


@dataclass
class Settlement:
    rule: str
    rows: list = field(default_factory=list)

    def by_kind(self, kind):
        return [r for r in self.rows if r.kind == kind]

    def get(self, participant):
        for r in self.rows:
            if r.participant == participant:
                return r
        raise KeyError(participant)

    @property
    def sellers(self):
        return self.by_kind("seller")

    @property
    def network(self):
        rows = self.by_kind("network")
        return rows[0] if rows else None

    @property
    def total_gloc(self):
        return float(sum(r.gloc for r in self.rows))

    @property
    def total_lloc(self):
        return float(sum(r.lloc for r in self.rows))

    @property
    def total_mwp(self):
        return float(sum(r.mwp for r in self.sellers))

    @property
    def join_objective(self):
        """sum over sellers of max(LLOC, MWP) plus the network's LLOC."""
        val = sum(max(r.lloc, r.mwp) for r in self.sellers)
        if self.network is not None:
            val += self.network.lloc
        return float(val)

    def paradoxically_accepted(self, tol=1e-6):
        return [r.participant for r in self.sellers if r.utility < -tol]


def settle(instance, outcome, prices, gloc_method="dp"):
    """Utilities, lost opportunity costs and make-whole payments at ``prices``."""
    respond = {"dp": best_response_dp, "milp": best_response_milp}[gloc_method]
    T = instance.n_hours
    sched = outcome.schedule
    out = Settlement(prices.rule)
    for s, offer in enumerate(instance.sellers):
        p = prices.at(offer.node_id)
        y, u = sched.dispatch[s], sched.commitment[s]
        revenue = float(p @ y)
        cost = variable_and_fixed_cost(offer, y, u)
        utility = revenue - cost
        margin = p - offer.var_cost
        pmax = offer.p_max_series(T)
        local_best = float(np.sum(np.maximum(margin * pmax * u, margin * offer.p_min * u)))
        lloc = max(local_best - float(margin @ y), 0.0)
        best, _, _ = respond(offer, p, T)
        gloc = max(best - utility, lloc)
        out.rows.append(ParticipantSettlement(offer.seller_id, "seller", utility, gloc, lloc,
                                              max(0.0, -utility), revenue, cost))
    for b, buyer in enumerate(instance.buyers):
        paid = float(prices.at(buyer.node_id) @ outcome.served[b])
        out.rows.append(ParticipantSettlement(buyer.buyer_id, "buyer", -paid, 0.0, 0.0, 0.0,
                                              0.0, paid))
    model = network_model(instance, outcome)
    if model is not None:
        lloc, rent = network_lloc(instance, outcome, prices, model)
        out.rows.append(ParticipantSettlement("network", "network", rent, lloc, lloc,
                                              max(0.0, -rent), rent, 0.0))
    return out


# ---------------------------------------------------------------------------
# Join pricing


def join_prices(instance, outcome, price_bound=None):
    """Prices minimising sum_s max(LLOC_s, MWP_s) + network LLOC.

    LLOC uses hourly interval endpoints under the fixed commitment.  The
    network term is the dual of the best-rent LP: any dual-feasible point
    bounds the best rent from above, and minimisation makes the bound tight.
    """
    net = instance.network
    T = instance.n_hours
    template = ip_prices(instance, outcome)
    V = PRICE_BOUND_FACTOR * instance.voll if price_bound is None else price_bound
    mb = ModelBuilder()
    price = np.empty((len(template.locations), T), dtype=int)
    for i, loc in enumerate(template.locations):
        for t in range(T):
            price[i, t] = mb.add_var(f"p[{loc},{t}]", -V, V)

    def pvar(node, t):
        return price[template.locations.index(template.node_location[node]), t]

    sched = outcome.schedule
    for s, offer in enumerate(instance.sellers):
        y, u = sched.dispatch[s], sched.commitment[s]
        pmax = offer.p_max_series(T)
        cost = variable_and_fixed_cost(offer, y, u)
        m = mb.add_var(f"m[{offer.seller_id}]", 0.0, math.inf, 1.0)
        # m >= cost - sum p*y   (MWP)
        mb.add_row([(pvar(offer.node_id, t), float(y[t])) for t in range(T)] + [(m, 1.0)],
                   ">=", cost, f"mwp[{offer.seller_id}]")
        # m >= sum lam - sum (p - g) y   (LLOC)
        lloc_terms, lloc_rhs = [(m, 1.0)], 0.0
        for t in range(T):
            lam = mb.add_var(f"lam[{offer.seller_id},{t}]", 0.0 if u[t] < 0.5 else -math.inf)
            for level in (pmax[t] * u[t], offer.p_min * u[t]):
                # lam >= (p - g) * level
                mb.add_row({lam: 1.0, pvar(offer.node_id, t): -level}, ">=",
                           -offer.var_cost * level, f"endpoint[{offer.seller_id},{t}]")
            lloc_terms += [(lam, -1.0), (pvar(offer.node_id, t), float(y[t]))]
            lloc_rhs += offer.var_cost * float(y[t])
        mb.add_row(lloc_terms, ">=", lloc_rhs, f"lloc[{offer.seller_id}]")

    model = network_model(instance, outcome)
    if model is not None and model.lines:
        _add_network_dual(mb, instance, model, pvar)
    lp = mb.build()
    res = solve_lp(lp)
    if not res.optimal:
        raise PricingError(f"join pricing LP is {res.status}")
    best = res.objective
    # Many prices are often optimal (locations nobody trades at are free).
    # Among them, pick the ones closest to the IP prices.
    mb.clear_costs()
    mb.add_row([(j, 1.0) for j in np.flatnonzero(lp.cost)], "<=",
               best + 1e-9 * max(1.0, abs(best)), "join_optimal")
    for i in range(price.shape[0]):
        for t in range(T):
            up = mb.add_var(cost=1.0)
            down = mb.add_var(cost=1.0)
            mb.add_row({price[i, t]: 1.0, up: -1.0, down: 1.0}, "==",
                       float(template.values[i, t]), "closest")
    res2 = solve_lp(mb.build())
    if res2.optimal:
        res = res2
    values = res.x[price]
    values = np.where(np.abs(values) < 1e-9, 0.0, values)
    surface = template.with_values(values, "join")
    surface.objective = best
    return surface


def _add_network_dual(mb, instance, model, pvar):
    net = instance.network
    ang = net.angle_limit
    T = instance.n_hours
    ends = []
    for k in model.lines:
        for end in (net.lines[k].from_node, net.lines[k].to_node):
            if end not in ends:
                ends.append(end)
    pinned = set()
    if ang is None:
        for comp in net.components():
            for n in comp:
                if n in ends:
                    pinned.add(n)
                    break
    m_net = mb.add_var("m[network]", 0.0, math.inf, 1.0)
    dom_terms, dom_rhs = [(m_net, 1.0)], 0.0
    for t in range(T):
        sigma = {}
        for i, k in enumerate(model.lines):
            line = net.lines[k]
            sigma[k] = mb.add_var(f"sigma[{k},{t}]", -math.inf, math.inf)
            row = {sigma[k]: 1.0, pvar(line.to_node, t): -1.0}
            row[pvar(line.from_node, t)] = row.get(pvar(line.from_node, t), 0.0) + 1.0
            if math.isfinite(model.caps[i]):
                a = mb.add_var(f"alpha[{k},{t}]")
                b = mb.add_var(f"beta[{k},{t}]")
                row[a] = 1.0
                row[b] = -1.0
                dom_terms += [(a, -model.caps[i]), (b, -model.caps[i])]
            # sigma + alpha - beta = p_to - p_from
            mb.add_row(row, "==", 0.0, f"flowdual[{k},{t}]")
            # actual rent enters with a minus sign: m >= bound - sum w f*
            f_star = float(model.flows[i, t])
            dom_terms += [(pvar(line.to_node, t), f_star), (pvar(line.from_node, t), -f_star)]
        for n in ends:
            if n in pinned:
                continue
            coeffs = {}
            for k in model.lines:
                line = net.lines[k]
                if line.from_node == n:
                    coeffs[sigma[k]] = coeffs.get(sigma[k], 0.0) + line.susceptance
                if line.to_node == n:
                    coeffs[sigma[k]] = coeffs.get(sigma[k], 0.0) - line.susceptance
            if ang is not None:
                gp = mb.add_var(f"gamma+[{n},{t}]")
                gm = mb.add_var(f"gamma-[{n},{t}]")
                coeffs[gp] = -1.0
                coeffs[gm] = 1.0
                dom_terms += [(gp, -ang), (gm, -ang)]
            mb.add_row(coeffs, "==", 0.0, f"angledual[{n},{t}]")
    mb.add_row(dom_terms, ">=", dom_rhs, "network_rent_bound")


def join_objective(instance, outcome, prices):
    """The Join functional evaluated at arbitrary prices."""
    return settle(instance, outcome, prices).join_objective


def prices_for(rule, instance, outcome):
    if rule == "ip":
        return ip_prices(instance, outcome)
    if rule == "ch":
        return ch_prices(instance, outcome)
    if rule == "join":
        return join_prices(instance, outcome)
    raise ValueError(f"unknown pricing rule {rule!r}")
