"""Simplified Euphemia: clear, price uniformly, cut loss-making sellers, repeat.

A seller that loses money at the uniform prices of the current candidate is
paradoxically accepted.  Every hour it was committed in that candidate gets
the cut ``u = 0`` and the market is cleared again.  The loop stops when no
seller needs a make-whole payment.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clearing import MarketOutcome, clear_national, clear_zonal
from .pricing import PriceSurface, Settlement, best_response_dp, ip_prices, settle


@dataclass(frozen=True)
class FlowWarning:
    line: int
    hour: int
    flow: float
    price_from: float
    price_to: float


@dataclass
class EuphemiaIteration:
    objective: float
    paradoxically_accepted: list


@dataclass
class EuphemiaResult:
    outcome: MarketOutcome
    prices: PriceSurface
    settlement: Settlement
    iterations: int
    cuts: list                      # (seller id, hour) pairs forced offline
    welfare_loss: float             # final objective minus uncut objective
    paradoxically_rejected: list
    converged: bool
    flow_warnings: list = field(default_factory=list)
    history: list = field(default_factory=list)


def _clear(instance, zones, fraction, gap, cuts):
    if zones is None or zones.k == 1:
        return clear_national(instance, gap=gap, cuts=cuts)
    return clear_zonal(instance, zones, fraction, gap=gap, cuts=cuts)


def rejected_but_profitable(instance, outcome, prices, tol=1e-6):
    """Sellers left out entirely although running would have paid at ``prices``."""
    out = []
    for s, offer in enumerate(instance.sellers):
        if np.any(outcome.schedule.commitment[s] > 0.5):
            continue
        profit, _, _ = best_response_dp(offer, prices.at(offer.node_id), instance.n_hours)
        if profit > tol:
            out.append(offer.seller_id)
    return out


def adverse_flows(instance, outcome, prices, tol=1e-6):
    """Cross-zonal flows running from a higher to a lower price."""
    if outcome.config != "zonal" or outcome.flows is None:
        return []
    warnings = []
    for k, line in enumerate(instance.network.lines):
        if np.isnan(outcome.flows[k]).any():
            continue
        pf, pt = prices.at(line.from_node), prices.at(line.to_node)
        for t in range(instance.n_hours):
            f = outcome.flows[k, t]
            if (f > tol and pf[t] > pt[t] + tol) or (f < -tol and pt[t] > pf[t] + tol):
                warnings.append(FlowWarning(k, instance.hours[t], float(f), float(pf[t]),
                                            float(pt[t])))
    return warnings


def run_euphemia(instance, zones=None, gap=0.05, max_iters=200, interconnector_fraction=0.8,
                 tol=1e-6):
    """Iterate clearing and uniform pricing until no seller is paradoxically accepted."""
    cuts = frozenset()
    history = []
    base = None
    converged = False
    for it in range(1, max_iters + 1):
        outcome = _clear(instance, zones, interconnector_fraction, gap, cuts)
        if base is None:
            base = outcome.objective
        prices = ip_prices(instance, outcome)
        st = settle(instance, outcome, prices)
        losers = [s for s, row in enumerate(st.sellers)
                  if row.utility < -tol * max(1.0, row.cost)]
        history.append(EuphemiaIteration(outcome.objective,
                                         [instance.sellers[s].seller_id for s in losers]))
        if not losers:
            converged = True
            break
        new = {(s, t) for s in losers for t in range(instance.n_hours)
               if outcome.schedule.commitment[s, t] > 0.5}
        cuts = cuts | new
    cut_list = sorted((instance.sellers[s].seller_id, instance.hours[t]) for s, t in cuts)
    return EuphemiaResult(
        outcome=outcome, prices=prices.with_values(prices.values, "euphemia"), settlement=st,
        iterations=len(history), cuts=cut_list, welfare_loss=outcome.objective - base,
        paradoxically_rejected=rejected_but_profitable(instance, outcome, prices, tol),
        converged=converged, flow_warnings=adverse_flows(instance, outcome, prices, tol),
        history=history)
