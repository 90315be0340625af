"""Price statistics and the split of price dispersion into network and time parts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_PRICE_CAP = 100.0


@dataclass(frozen=True)
class PriceStats:
    mean: float
    median: float
    std: float          # population standard deviation
    outliers: int       # prices above the cap, counted before capping
    count: int
    cap: float

    def as_dict(self):
        return {"mean": self.mean, "median": self.median, "std": self.std,
                "outliers": self.outliers, "count": self.count, "cap": self.cap}


def _values(prices):
    if hasattr(prices, "values") and hasattr(prices, "locations"):
        return np.asarray(prices.values, dtype=float).ravel()
    if isinstance(prices, (list, tuple)) and prices and hasattr(prices[0], "locations"):
        return np.concatenate([_values(p) for p in prices])
    return np.asarray(prices, dtype=float).ravel()


def price_stats(prices, cap=DEFAULT_PRICE_CAP):
    """Mean, median and population std of the series after capping at ``cap``.

    ``prices`` may be a :class:`PriceSurface`, a list of them, or any array.
    """
    raw = _values(prices)
    if raw.size == 0:
        raise ValueError("price series is empty")
    capped = np.minimum(raw, cap)
    return PriceStats(mean=float(capped.mean()), median=float(np.median(capped)),
                      std=float(capped.std()), outliers=int(np.sum(raw > cap)),
                      count=int(raw.size), cap=float(cap))


@dataclass
class VarianceDecomposition:
    nodes: tuple
    hours: tuple
    congestion: np.ndarray      # per hour: std across nodes
    temporal: np.ndarray        # per node: std across hours
    zone_congestion: dict       # zone -> mean over hours of the within-zone std
    zone_temporal: dict         # zone -> mean temporal std of member nodes


def variance_decomposition(prices, zones=None, cap=None):
    """Congestion-driven (across nodes) and time-driven (across hours) dispersion."""
    if prices.granularity != "nodal":
        raise ValueError("variance decomposition needs nodal prices")
    P = np.asarray(prices.values, dtype=float)
    if cap is not None:
        P = np.minimum(P, cap)
    congestion = P.std(axis=0)
    temporal = P.std(axis=1)
    zc, zt = {}, {}
    if zones is not None:
        locs = list(prices.locations)
        for z in zones.zones:
            rows = [locs.index(n) for n in zones.members(z) if n in locs]
            if not rows:
                continue
            zc[z] = float(P[rows].std(axis=0).mean())
            zt[z] = float(temporal[rows].mean())
    return VarianceDecomposition(tuple(prices.locations), tuple(prices.hours), congestion,
                                 temporal, zc, zt)
