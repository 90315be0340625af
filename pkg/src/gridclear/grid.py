"""Transmission network, DC power-flow algebra and zone partitions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Node:
    id: str
    lat: float | None = None
    lon: float | None = None


@dataclass(frozen=True)
class Line:
    from_node: str
    to_node: str
    susceptance: float
    limit: float

    @property
    def key(self):
        return tuple(sorted((self.from_node, self.to_node)))


@dataclass(frozen=True)
class Network:
    nodes: tuple
    lines: tuple
    margin: float = 0.20
    angle_limit: float | None = None   # optional |theta| box (radians)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "lines", tuple(self.lines))
        if not 0.0 <= self.margin < 1.0:
            raise ValueError(f"security margin must lie in [0, 1), got {self.margin}")

    @property
    def node_ids(self):
        return [n.id for n in self.nodes]

    def node_index(self):
        return {n.id: i for i, n in enumerate(self.nodes)}

    def effective_limit(self, line):
        return (1.0 - self.margin) * line.limit

    def effective_limits(self):
        return np.array([self.effective_limit(l) for l in self.lines], dtype=float)

    def incidence(self):
        """Node x line matrix with +1 at the sending end and -1 at the receiving end."""
        idx = self.node_index()
        K = np.zeros((len(self.nodes), len(self.lines)))
        for k, line in enumerate(self.lines):
            K[idx[line.from_node], k] = 1.0
            K[idx[line.to_node], k] = -1.0
        return K

    def with_margin(self, margin):
        return Network(self.nodes, self.lines, margin, self.angle_limit)

    def with_limits(self, limit):
        lines = [Line(l.from_node, l.to_node, l.susceptance, limit) for l in self.lines]
        return Network(self.nodes, lines, self.margin, self.angle_limit)

    def scaled_susceptances(self, factor):
        lines = [Line(l.from_node, l.to_node, l.susceptance * factor, l.limit) for l in self.lines]
        return Network(self.nodes, lines, self.margin, self.angle_limit)

    def components(self):
        """Connected components as lists of node ids, in node order."""
        idx = self.node_index()
        parent = list(range(len(self.nodes)))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for line in self.lines:
            if line.from_node in idx and line.to_node in idx:
                ra, rb = find(idx[line.from_node]), find(idx[line.to_node])
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        groups = {}
        for i, n in enumerate(self.nodes):
            groups.setdefault(find(i), []).append(n.id)
        return list(groups.values())


def merge_parallel_lines(lines):
    """Merge lines joining the same unordered node pair (susceptances and limits add)."""
    merged = {}
    order = []
    for line in lines:
        key = line.key
        if key not in merged:
            merged[key] = line
            order.append(key)
            continue
        prev = merged[key]
        merged[key] = Line(prev.from_node, prev.to_node,
                           prev.susceptance + line.susceptance, prev.limit + line.limit)
    return [merged[k] for k in order]


@dataclass(frozen=True)
class ZoneMap:
    mapping: dict

    def __post_init__(self):
        object.__setattr__(self, "mapping", dict(self.mapping))

    @property
    def zones(self):
        """Zone ids in order of first appearance."""
        seen = []
        for z in self.mapping.values():
            if z not in seen:
                seen.append(z)
        return seen

    @property
    def k(self):
        return len(self.zones)

    def zone(self, node_id):
        return self.mapping[node_id]

    def members(self, zone_id):
        return [n for n, z in self.mapping.items() if z == zone_id]

    def validate(self, network):
        missing = [n for n in network.node_ids if n not in self.mapping]
        if missing:
            raise ValueError(f"zone map misses nodes: {missing}")
        unknown = [n for n in self.mapping if n not in set(network.node_ids)]
        if unknown:
            raise ValueError(f"zone map names unknown nodes: {unknown}")

    @classmethod
    def single(cls, network, zone_id="Z1"):
        return cls({n: zone_id for n in network.node_ids})

    @classmethod
    def per_node(cls, network):
        return cls({n: n for n in network.node_ids})


def dc_flows(network, angles):
    """Line flows B_nm * (theta_n - theta_m), one row per line.

    ``angles`` maps node id to a per-hour sequence (or a scalar for one hour).
    """
    hours = None
    for line in network.lines:
        for node in (line.from_node, line.to_node):
            if node not in angles:
                raise KeyError(f"missing angle for node {node!r}")
    rows = []
    for line in network.lines:
        a = np.atleast_1d(np.asarray(angles[line.from_node], dtype=float))
        b = np.atleast_1d(np.asarray(angles[line.to_node], dtype=float))
        if hours is None:
            hours = len(a)
        for node, arr in ((line.from_node, a), (line.to_node, b)):
            bad = np.flatnonzero(~np.isfinite(arr))
            if bad.size or len(arr) != hours:
                h = int(bad[0]) if bad.size else min(len(arr), hours)
                raise KeyError(f"missing angle for node {node!r} hour {h}")
        rows.append(line.susceptance * (a - b))
    if not rows:
        return np.zeros((0, 0 if hours is None else hours))
    return np.vstack(rows)


def cross_zonal_lines(network, zones):
    """Lines whose endpoints lie in different zones, sorted by (from, to)."""
    zones.validate(network)
    out = [l for l in network.lines if zones.zone(l.from_node) != zones.zone(l.to_node)]
    return sorted(out, key=lambda l: (l.from_node, l.to_node))


def zone_capacities(network, zones, fraction=1.0, margin=None):
    """Aggregate cross-zonal capacity per unordered zone pair."""
    m = network.margin if margin is None else margin
    caps = {}
    for line in cross_zonal_lines(network, zones):
        pair = tuple(sorted((zones.zone(line.from_node), zones.zone(line.to_node))))
        caps[pair] = caps.get(pair, 0.0) + fraction * (1.0 - m) * line.limit
    return caps


@dataclass
class ValidationReport:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    components: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.errors


def validate_network(network):
    report = ValidationReport()
    ids = [n.id for n in network.nodes]
    seen = set()
    for i in ids:
        if i in seen:
            report.errors.append(f"duplicate node id {i!r}")
        seen.add(i)
    pairs = set()
    for k, line in enumerate(network.lines):
        for end in (line.from_node, line.to_node):
            if end not in seen:
                report.errors.append(f"line {k} references unknown node {end!r}")
        if line.from_node == line.to_node:
            report.errors.append(f"line {k} is a self-loop at {line.from_node!r}")
        if not line.susceptance > 0:
            report.errors.append(f"line {k} has nonpositive susceptance {line.susceptance}")
        if not line.limit > 0:
            report.errors.append(f"line {k} has nonpositive limit {line.limit}")
        if line.key in pairs:
            report.errors.append(f"line {k} duplicates pair {line.key}; merge parallel lines")
        pairs.add(line.key)
    report.components = network.components()
    if len(report.components) > 1:
        report.warnings.append(f"network has {len(report.components)} connected components")
    return report


def dc_power_flow(network, injections):
    """Physical flows for per-node injections (nodes x hours).

    Each connected component whose injections balance gets its unique DC
    flow pattern; an unbalanced component cannot be solved and keeps zero
    angles, so its injections show up as balance residuals.

    Returns (theta, flows, residual) with residual = injection - net outflow.
    """
    inj = np.atleast_2d(np.asarray(injections, dtype=float))
    n_nodes, hours = inj.shape
    idx = network.node_index()
    K = network.incidence()
    bvec = np.array([l.susceptance for l in network.lines])
    L = (K * bvec) @ K.T
    theta = np.zeros((n_nodes, hours))
    for comp in network.components():
        rows = [idx[c] for c in comp]
        if len(rows) < 2:
            continue
        ref, rest = rows[0], rows[1:]
        red = L[np.ix_(rest, rest)]
        for t in range(hours):
            p = inj[rows, t]
            if abs(p.sum()) > 1e-9 * max(1.0, np.abs(p).sum()):
                continue
            theta[rest, t] = np.linalg.solve(red, inj[rest, t])
            theta[ref, t] = 0.0
    flows = (K * bvec).T @ theta if network.lines else np.zeros((0, hours))
    residual = inj - K @ flows if network.lines else inj.copy()
    return theta, flows, residual
