"""Bids, generator data, the unit-commitment polytope and cost evaluation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Network, ZoneMap, validate_network

DEFAULT_VOLL = 3000.0
_TOL = 1e-7


class ScheduleError(ValueError):
    """A schedule violates a generator's unit-commitment polytope."""

    def __init__(self, row, message):
        super().__init__(f"{row}: {message}")
        self.row = row


@dataclass(frozen=True)
class DemandSeries:
    buyer_id: str
    node_id: str
    profile: tuple

    def __post_init__(self):
        object.__setattr__(self, "profile", tuple(float(v) for v in self.profile))
        if any(v < 0 for v in self.profile):
            raise ValueError(f"buyer {self.buyer_id}: negative demand")


@dataclass(frozen=True)
class GeneratorOffer:
    """One seller.  ``p_max`` is a scalar or a per-hour sequence."""

    seller_id: str
    node_id: str
    p_min: float
    p_max: object
    min_uptime: int
    var_cost: float
    fixed_cost: float
    kind: str = ""

    def __post_init__(self):
        pm = self.p_max
        if np.ndim(pm) == 0:
            pm = float(pm)
        else:
            pm = tuple(float(v) for v in pm)
        object.__setattr__(self, "p_max", pm)
        if self.p_min < 0:
            raise ValueError(f"seller {self.seller_id}: negative minimum output")
        if int(self.min_uptime) != self.min_uptime or self.min_uptime < 1:
            raise ValueError(f"seller {self.seller_id}: minimum uptime must be an integer >= 1")
        if not (np.isfinite(self.var_cost) and np.isfinite(self.fixed_cost)):
            raise ValueError(f"seller {self.seller_id}: costs must be finite")

    def p_max_at(self, t):
        return self.p_max if isinstance(self.p_max, float) else self.p_max[t]

    def p_max_series(self, n_hours):
        if isinstance(self.p_max, float):
            return np.full(n_hours, self.p_max)
        if len(self.p_max) != n_hours:
            raise ValueError(f"seller {self.seller_id}: availability length != horizon")
        return np.array(self.p_max)


@dataclass(frozen=True)
class MarketInstance:
    network: Network
    buyers: tuple
    sellers: tuple
    hours: tuple
    zones: ZoneMap | None = None
    voll: float = DEFAULT_VOLL
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "buyers", tuple(self.buyers))
        object.__setattr__(self, "sellers", tuple(self.sellers))
        object.__setattr__(self, "hours", tuple(self.hours))
        if self.zones is None:
            object.__setattr__(self, "zones", ZoneMap.single(self.network))

    @property
    def n_hours(self):
        return len(self.hours)

    def validate(self):
        """Raise ValueError on referential or shape problems; return the network report."""
        report = validate_network(self.network)
        if report.errors:
            raise ValueError("; ".join(report.errors))
        nodes = set(self.network.node_ids)
        T = self.n_hours
        ids = [s.seller_id for s in self.sellers]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate seller ids")
        for s in self.sellers:
            if s.node_id not in nodes:
                raise ValueError(f"seller {s.seller_id} at unknown node {s.node_id!r}")
            if s.min_uptime > T:
                raise ValueError(f"seller {s.seller_id}: minimum uptime {s.min_uptime} "
                                 f"exceeds horizon of {T} hours")
            pmax = s.p_max_series(T)
            if np.any(pmax < s.p_min - _TOL) and s.p_min > 0:
                # a unit that cannot reach its minimum in some hour simply cannot run then
                report.warnings.append(f"seller {s.seller_id}: p_max below p_min in some hours")
        for b in self.buyers:
            if b.node_id not in nodes:
                raise ValueError(f"buyer {b.buyer_id} at unknown node {b.node_id!r}")
            if len(b.profile) != T:
                raise ValueError(f"buyer {b.buyer_id}: profile length != horizon")
        self.zones.validate(self.network)
        return report

    def node_demand(self):
        idx = self.network.node_index()
        D = np.zeros((len(self.network.nodes), self.n_hours))
        for b in self.buyers:
            D[idx[b.node_id]] += np.array(b.profile)
        return D

    def seller_index(self):
        return {s.seller_id: i for i, s in enumerate(self.sellers)}

    def replace(self, **kw):
        data = dict(network=self.network, buyers=self.buyers, sellers=self.sellers,
                    hours=self.hours, zones=self.zones, voll=self.voll, name=self.name)
        data.update(kw)
        return MarketInstance(**data)


@dataclass
class Schedule:
    """Per-seller per-hour dispatch, commitment and startup indicators."""

    dispatch: np.ndarray
    commitment: np.ndarray
    startup: np.ndarray

    @classmethod
    def from_commitment(cls, dispatch, commitment):
        u = np.asarray(commitment, dtype=float)
        return cls(np.asarray(dispatch, dtype=float), u, startup_indicators(u))


def startup_indicators(u):
    """Canonical startups max(0, u_t - u_{t-1}); the first hour carries none."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    phi = np.zeros_like(u)
    phi[:, 1:] = np.maximum(0.0, u[:, 1:] - u[:, :-1])
    return phi


@dataclass(frozen=True)
class UCRow:
    """Linear row over the symbols ('y', t), ('u', t), ('phi', t)."""

    coeffs: dict
    sense: str
    rhs: float
    label: str


def build_uc_constraints(offer, n_hours):
    """Rows of the unit-commitment polytope for one seller.

    Per hour: y >= p_min * u and y <= p_max_t * u.  For every hour after the
    first: phi_t >= u_t - u_{t-1} and sum(phi over the last min_uptime hours,
    truncated at the horizon start) <= u_t.  The unit starts offline and the
    first hour has no startup linking.  Output at other nodes is excluded by
    construction (y exists only at the seller's node).
    """
    if offer.min_uptime > n_hours:
        raise ValueError(f"seller {offer.seller_id}: minimum uptime {offer.min_uptime} "
                         f"exceeds horizon of {n_hours} hours")
    pmax = offer.p_max_series(n_hours)
    rows = []
    for t in range(n_hours):
        rows.append(UCRow({("y", t): 1.0, ("u", t): -offer.p_min}, ">=", 0.0, f"min_output[{t}]"))
        rows.append(UCRow({("y", t): 1.0, ("u", t): -pmax[t]}, "<=", 0.0, f"max_output[{t}]"))
    R = int(offer.min_uptime)
    for t in range(1, n_hours):
        rows.append(UCRow({("phi", t): 1.0, ("u", t): -1.0, ("u", t - 1): 1.0}, ">=", 0.0,
                          f"startup[{t}]"))
        window = {("phi", i): 1.0 for i in range(max(1, t - R + 1), t + 1)}
        window[("u", t)] = window.get(("u", t), 0.0) - 1.0
        rows.append(UCRow(window, "<=", 0.0, f"uptime[{t}]"))
    return rows


def check_uc(offer, dispatch, commitment, startup=None, tol=_TOL):
    """Return the label of the first violated polytope row, or None."""
    y = np.asarray(dispatch, dtype=float)
    u = np.asarray(commitment, dtype=float)
    T = len(y)
    if np.any(np.abs(u - np.round(u)) > tol) or np.any((u < -tol) | (u > 1 + tol)):
        return "binary[u]"
    if startup is None:
        startup = startup_indicators(u)[0]
    vals = {}
    for t in range(T):
        vals[("y", t)] = y[t]
        vals[("u", t)] = u[t]
        vals[("phi", t)] = startup[t]
    for row in build_uc_constraints(offer, T):
        lhs = sum(a * vals[k] for k, a in row.coeffs.items())
        scale = tol * max(1.0, abs(offer.p_min), float(np.max(offer.p_max_series(T), initial=0)))
        if row.sense == ">=" and lhs < row.rhs - scale:
            return row.label
        if row.sense == "<=" and lhs > row.rhs + scale:
            return row.label
    return None


def cost_of(offer, dispatch, commitment, startup=None):
    """Generation cost sum(g * y) + sum(h * u); schedules outside the polytope raise."""
    bad = check_uc(offer, dispatch, commitment, startup)
    if bad is not None:
        raise ScheduleError(bad, f"schedule of seller {offer.seller_id} is infeasible")
    return variable_and_fixed_cost(offer, dispatch, commitment)


def variable_and_fixed_cost(offer, dispatch, commitment):
    y = np.asarray(dispatch, dtype=float)
    u = np.asarray(commitment, dtype=float)
    return float(offer.var_cost * y.sum() + offer.fixed_cost * np.round(u).sum())
