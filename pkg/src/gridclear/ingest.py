"""Instance loading and writing, demand/renewable preprocessing, the generator
mapping integer program, and a synthetic instance generator.

CSV layouts (UTF-8, comma separated, header row required)::

    nodes.csv         node_id,lat,lon
    lines.csv         from,to,susceptance_pu,limit_mw
    generators.csv    gen_id,node_id,type,p_min_mw,p_max_mw,min_uptime_h,var_cost_eur_mwh,fixed_cost_eur_h
    demand.csv        buyer_id,node_id,hour,load_mwh
    zones.csv         node_id,zone_id
    availability.csv  gen_id,hour,p_max_mw        (optional, per-hour p_max overrides)
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import Line, Network, Node, ZoneMap, merge_parallel_lines
from .lpmilp import ModelBuilder, solve_milp
from .market import DemandSeries, GeneratorOffer, MarketInstance

HEADERS = {
    "nodes.csv": ["node_id", "lat", "lon"],
    "lines.csv": ["from", "to", "susceptance_pu", "limit_mw"],
    "generators.csv": ["gen_id", "node_id", "type", "p_min_mw", "p_max_mw", "min_uptime_h",
                       "var_cost_eur_mwh", "fixed_cost_eur_h"],
    "demand.csv": ["buyer_id", "node_id", "hour", "load_mwh"],
    "zones.csv": ["node_id", "zone_id"],
    "availability.csv": ["gen_id", "hour", "p_max_mw"],
}
FLOW_CAP_MODES = ("zonal_flows", "physical")


class SchemaError(ValueError):
    def __init__(self, path, row, column, message):
        where = f"{os.path.basename(path)} row {row}" + (f" column {column!r}" if column else "")
        super().__init__(f"{where}: {message}")
        self.path, self.row, self.column = path, row, column


@dataclass
class RunConfig:
    margin: float = 0.2
    interconnector_fraction: float = 0.8
    mip_gap: float = 0.05
    voll_eur_mwh: float = 3000.0
    price_cap_eur_mwh: float = 100.0
    redispatch_flow_cap: str = "zonal_flows"
    hours: int | None = None

    def __post_init__(self):
        if self.redispatch_flow_cap not in FLOW_CAP_MODES:
            raise ValueError(f"redispatch_flow_cap must be one of {FLOW_CAP_MODES}")
        if not 0.0 <= self.margin < 1.0:
            raise ValueError("margin must lie in [0, 1)")
        if not 0.0 < self.interconnector_fraction <= 1.0:
            raise ValueError("interconnector_fraction must lie in (0, 1]")
        if not 0.0 <= self.mip_gap <= 1.0:
            raise ValueError("mip_gap must lie in [0, 1]")

    def to_json(self):
        data = asdict(self)
        if data["hours"] is None:
            del data["hours"]
        return data


def load_config(path):
    if path is None or not os.path.exists(path):
        return RunConfig()
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    return RunConfig(**data)


def _read(path, required=True, schema=None):
    name = schema or os.path.basename(path)
    if not os.path.exists(path):
        if required:
            raise FileNotFoundError(path)
        return None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(path, 1, None, "missing header row") from None
        expected = HEADERS[name]
        if header != expected:
            raise SchemaError(path, 1, None, f"header {header} != expected {expected}")
        rows = []
        for k, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(expected):
                raise SchemaError(path, k, None, f"expected {len(expected)} fields, got {len(rec)}")
            rows.append((k, dict(zip(expected, rec))))
    return rows


def _num(path, k, rec, col, kind=float, allow_blank=False):
    raw = rec[col].strip()
    if raw == "" and allow_blank:
        return None
    try:
        val = kind(raw)
    except ValueError:
        raise SchemaError(path, k, col, f"cannot parse {raw!r} as {kind.__name__}") from None
    if kind is float and math.isnan(val):
        raise SchemaError(path, k, col, "NaN not allowed")
    return val


def load_instance(directory, config=None, files=None):
    """Read a case directory into a validated :class:`MarketInstance`.

    ``files`` may override individual file paths (keys as in ``HEADERS``).
    ``config`` is a :class:`RunConfig`; when omitted, ``config.json`` in the
    directory is used if present.
    """
    files = dict(files or {})
    path = lambda name: files.get(name, os.path.join(directory, name))  # noqa: E731
    if config is None:
        config = load_config(files.get("config.json", os.path.join(directory, "config.json")))

    p = path("nodes.csv")
    nodes = []
    for k, rec in _read(p, schema="nodes.csv"):
        nid = rec["node_id"].strip()
        if not nid:
            raise SchemaError(p, k, "node_id", "empty id")
        nodes.append(Node(nid, _num(p, k, rec, "lat", allow_blank=True),
                          _num(p, k, rec, "lon", allow_blank=True)))
    ids = [n.id for n in nodes]
    dup = {i for i in ids if ids.count(i) > 1}
    if dup:
        raise ValueError(f"duplicate node ids: {sorted(dup)}")
    known = set(ids)

    p = path("lines.csv")
    lines = []
    for k, rec in _read(p, schema="lines.csv"):
        a, b = rec["from"].strip(), rec["to"].strip()
        for col, nid in (("from", a), ("to", b)):
            if nid not in known:
                raise SchemaError(p, k, col, f"unknown node id {nid!r}")
        lines.append(Line(a, b, _num(p, k, rec, "susceptance_pu"), _num(p, k, rec, "limit_mw")))
    network = Network(nodes, merge_parallel_lines(lines), margin=config.margin)

    p = path("demand.csv")
    demand_rows = _read(p, schema="demand.csv")
    hours = sorted({_num(p, k, rec, "hour", int) for k, rec in demand_rows})
    avail_rows = _read(path("availability.csv"), required=False, schema="availability.csv") or []
    ap = path("availability.csv")
    hours = sorted(set(hours) | {_num(ap, k, rec, "hour", int) for k, rec in avail_rows})
    if not hours:
        hours = list(range(config.hours or 1))
    hpos = {h: i for i, h in enumerate(hours)}
    T = len(hours)

    buyers = {}
    for k, rec in demand_rows:
        bid, nid = rec["buyer_id"].strip(), rec["node_id"].strip()
        if nid not in known:
            raise SchemaError(p, k, "node_id", f"unknown node id {nid!r}")
        entry = buyers.setdefault(bid, [nid, np.zeros(T)])
        if entry[0] != nid:
            raise SchemaError(p, k, "node_id", f"buyer {bid} appears at two nodes")
        load = _num(p, k, rec, "load_mwh")
        if load < 0:
            raise SchemaError(p, k, "load_mwh", "negative load")
        entry[1][hpos[_num(p, k, rec, "hour", int)]] += load
    buyer_list = [DemandSeries(b, nid, tuple(prof)) for b, (nid, prof) in buyers.items()]

    avail = {}
    for k, rec in avail_rows:
        gid = rec["gen_id"].strip()
        avail.setdefault(gid, {})[hpos[_num(ap, k, rec, "hour", int)]] = _num(ap, k, rec, "p_max_mw")

    p = path("generators.csv")
    sellers = []
    for k, rec in _read(p, schema="generators.csv"):
        gid, nid = rec["gen_id"].strip(), rec["node_id"].strip()
        if nid not in known:
            raise SchemaError(p, k, "node_id", f"unknown node id {nid!r}")
        pmax = _num(p, k, rec, "p_max_mw")
        if gid in avail:
            series = [avail[gid].get(t, pmax) for t in range(T)]
            pmax = tuple(series)
        try:
            sellers.append(GeneratorOffer(
                gid, nid, _num(p, k, rec, "p_min_mw"), pmax, _num(p, k, rec, "min_uptime_h", int),
                _num(p, k, rec, "var_cost_eur_mwh"), _num(p, k, rec, "fixed_cost_eur_h"),
                kind=rec["type"].strip()))
        except ValueError as exc:
            raise SchemaError(p, k, None, str(exc)) from None
    unknown_av = set(avail) - {s.seller_id for s in sellers}
    if unknown_av:
        raise ValueError(f"availability.csv names unknown generators {sorted(unknown_av)}")

    zrows = _read(path("zones.csv"), required=False, schema="zones.csv")
    zones = None
    if zrows is not None:
        zp = path("zones.csv")
        mapping = {}
        for k, rec in zrows:
            nid = rec["node_id"].strip()
            if nid not in known:
                raise SchemaError(zp, k, "node_id", f"unknown node id {nid!r}")
            mapping[nid] = rec["zone_id"].strip()
        zones = ZoneMap({n: mapping[n] for n in ids if n in mapping} | mapping)
    inst = MarketInstance(network, buyer_list, sellers, tuple(hours), zones=zones,
                          voll=config.voll_eur_mwh, name=os.path.basename(os.path.normpath(directory)))
    inst.validate()
    return inst


def load_zone_map(path, network=None):
    mapping = {}
    for k, rec in _read(path, schema="zones.csv"):
        mapping[rec["node_id"].strip()] = rec["zone_id"].strip()
    zones = ZoneMap(mapping)
    if network is not None:
        zones.validate(network)
    return zones


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float) and v.is_integer() and abs(v) < 1e15:
        return repr(v)
    return repr(v) if isinstance(v, float) else str(v)


def _write(path, name, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADERS[name])
        for r in rows:
            w.writerow([_fmt(c) for c in r])


def write_instance(instance, directory, config=None):
    """Write ``instance`` so that :func:`load_instance` reproduces it exactly."""
    os.makedirs(directory, exist_ok=True)
    net = instance.network
    _write(os.path.join(directory, "nodes.csv"), "nodes.csv",
           [(n.id, n.lat, n.lon) for n in net.nodes])
    _write(os.path.join(directory, "lines.csv"), "lines.csv",
           [(l.from_node, l.to_node, float(l.susceptance), float(l.limit)) for l in net.lines])
    gens, avail = [], []
    for s in instance.sellers:
        series = s.p_max_series(instance.n_hours)
        base = float(series.max()) if series.size else 0.0
        gens.append((s.seller_id, s.node_id, s.kind, float(s.p_min), base, int(s.min_uptime),
                     float(s.var_cost), float(s.fixed_cost)))
        if not isinstance(s.p_max, float):
            avail += [(s.seller_id, instance.hours[t], float(v)) for t, v in enumerate(s.p_max)]
    _write(os.path.join(directory, "generators.csv"), "generators.csv", gens)
    if avail:
        _write(os.path.join(directory, "availability.csv"), "availability.csv", avail)
    _write(os.path.join(directory, "demand.csv"), "demand.csv",
           [(b.buyer_id, b.node_id, instance.hours[t], float(v))
            for b in instance.buyers for t, v in enumerate(b.profile)])
    _write(os.path.join(directory, "zones.csv"), "zones.csv",
           [(n, z) for n, z in instance.zones.mapping.items()])
    if config is None:
        config = RunConfig(margin=net.margin, voll_eur_mwh=instance.voll)
    if not instance.buyers:
        config.hours = instance.n_hours
    with open(os.path.join(directory, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(config.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_zone_map(zones, path):
    _write(path, "zones.csv", list(zones.mapping.items()))


# ---------------------------------------------------------------------------
# Preprocessing


def disaggregate_demand(national_profile, base_loads, prefix="d_"):
    """Split a national load profile across nodes in proportion to base load."""
    profile = np.asarray(national_profile, dtype=float)
    total = float(sum(base_loads.values()))
    if not total > 0:
        raise ValueError("base loads must have a positive sum")
    out = []
    for node, base in base_loads.items():
        if base < 0:
            raise ValueError(f"negative base load at {node}")
        if base == 0:
            continue
        out.append(DemandSeries(f"{prefix}{node}", node, tuple(profile * (base / total))))
    return out


def scale_renewables(aggregate_output, capacities, tol=1e-9):
    """Hourly p_max per unit: the aggregate split in proportion to nominal capacity."""
    agg = np.asarray(aggregate_output, dtype=float)
    total = float(sum(capacities.values()))
    if not total > 0:
        raise ValueError("fleet capacity must be positive")
    over = np.flatnonzero(agg > total * (1 + tol))
    if over.size:
        h = int(over[0])
        raise ValueError(f"hour {h}: aggregate output {agg[h]} exceeds fleet capacity {total}")
    return {unit: agg * (cap / total) for unit, cap in capacities.items()}


# ---------------------------------------------------------------------------
# Generator-to-category mapping


@dataclass(frozen=True)
class SellerCategory:
    name: str
    plant_type: str
    capacity: float     # target capacity P_a (MW)
    units: int          # target unit count n_a


@dataclass(frozen=True)
class GridUnit:
    unit_id: str
    plant_type: str | None   # None = unidentified, may match any category
    capacity: float


@dataclass
class UnitMappingProblem:
    categories: list
    units: list
    max_capacity_deviation: float = 600.0
    max_count_deviation: int = 2

    def allowed(self, unit):
        return [a for a, c in enumerate(self.categories)
                if unit.plant_type is None or c.plant_type == unit.plant_type]


@dataclass
class MappingResult:
    assignment: dict
    capacity_deviation: dict
    count_deviation: dict
    objective: float
    gap: float = 0.0


class MappingInfeasible(ValueError):
    def __init__(self, categories):
        super().__init__(f"no assignment within the deviation bounds; binding categories: "
                         f"{categories}")
        self.categories = categories


def _mapping_model(problem, elastic=False):
    mb = ModelBuilder()
    x = {}
    for i, unit in enumerate(problem.units):
        allowed = problem.allowed(unit)
        if not allowed:
            raise ValueError(f"unit {unit.unit_id}: no category of type {unit.plant_type!r}")
        for a in allowed:
            cat = problem.categories[a]
            # objective sum_a n_a*(P_a - sum p x) + P_a*(n_a - sum x), constants dropped
            cost = 0.0 if elastic else -(cat.units * unit.capacity + cat.capacity)
            x[i, a] = mb.add_var(f"x[{unit.unit_id},{cat.name}]", cost=cost, binary=True)
        mb.add_row([(x[i, a], 1.0) for a in allowed], "==", 1.0, f"assign[{unit.unit_id}]")
    slacks = {}
    for a, cat in enumerate(problem.categories):
        terms_cap = [(j, problem.units[i].capacity) for (i, aa), j in x.items() if aa == a]
        terms_cnt = [(j, 1.0) for (i, aa), j in x.items() if aa == a]
        # 0 <= P_a - sum p x <= dev  and  0 <= n_a - sum x <= count_dev
        rows = [(terms_cap, "<=", cat.capacity), (terms_cap, ">=", cat.capacity -
                                                  problem.max_capacity_deviation),
                (terms_cnt, "<=", cat.units), (terms_cnt, ">=", cat.units -
                                               problem.max_count_deviation)]
        for terms, sense, rhs in rows:
            terms = list(terms)
            if elastic:
                sl = mb.add_var(f"slack[{cat.name}]", cost=1.0)
                slacks.setdefault(a, []).append(sl)
                terms.append((sl, -1.0 if sense == "<=" else 1.0))
            mb.add_row(terms, sense, rhs, f"dev[{cat.name}]")
    return mb.build(), x, slacks


def mapping_objective(problem, assignment):
    """Objective value of an assignment {unit_id: category name}."""
    total = 0.0
    for cat in problem.categories:
        members = [u for u in problem.units if assignment[u.unit_id] == cat.name]
        total += cat.units * (cat.capacity - sum(u.capacity for u in members))
        total += cat.capacity * (cat.units - len(members))
    return total


def map_units(problem, gap=0.0):
    """Assign every grid unit to one seller category, minimising weighted deviations."""
    lp, x, _ = _mapping_model(problem)
    res = solve_milp(lp, gap=gap)
    if not res.optimal:
        elp, ex, slacks = _mapping_model(problem, elastic=True)
        eres = solve_milp(elp, gap=0.0)
        binding = []
        if eres.optimal:
            binding = [problem.categories[a].name for a, js in slacks.items()
                       if sum(eres.x[j] for j in js) > 1e-6]
        raise MappingInfeasible(binding)
    assignment = {}
    for (i, a), j in x.items():
        if res.x[j] > 0.5:
            assignment[problem.units[i].unit_id] = problem.categories[a].name
    cap_dev, cnt_dev = {}, {}
    for cat in problem.categories:
        members = [u for u in problem.units if assignment[u.unit_id] == cat.name]
        cap_dev[cat.name] = cat.capacity - sum(u.capacity for u in members)
        cnt_dev[cat.name] = cat.units - len(members)
    return MappingResult(assignment, cap_dev, cnt_dev, mapping_objective(problem, assignment),
                         res.gap)


# ---------------------------------------------------------------------------
# Synthetic instances


def gen_synthetic(seed, nodes, sellers, hours, congestion_level, out_dir=None, margin=0.2):
    """Random desk-scale instance, deterministic per seed.

    Demand sits only at nodes hosting a unit with zero minimum output whose
    capacity covers the local peak, so every instance can be served without
    any flows.  Line limits interpolate between "never binding"
    (congestion 0) and tight (congestion 1).
    """
    if min(nodes, sellers, hours) < 1:
        raise ValueError("sizes must be >= 1")
    c = float(np.clip(congestion_level, 0.0, 1.0))
    rng = np.random.default_rng(seed)
    node_ids = [f"n{i + 1}" for i in range(nodes)]
    node_objs = [Node(n, round(float(rng.uniform(47, 55)), 4), round(float(rng.uniform(6, 15)), 4))
                 for n in node_ids]
    offers = []
    for s in range(sellers):
        node = node_ids[int(rng.integers(nodes))]
        pmax = round(float(rng.uniform(20, 100)), 1)
        flexible = s == 0 or rng.random() < 0.5
        pmin = 0.0 if flexible else round(float(rng.uniform(0.2, 0.5)) * pmax, 1)
        uptime = int(rng.integers(1, min(3, hours) + 1))
        g = round(float(rng.uniform(5, 60)), 2)
        h = 0.0 if rng.random() < 0.4 else round(float(rng.uniform(20, 200)), 1)
        offers.append(GeneratorOffer(f"g{s + 1}", node, pmin, pmax, uptime, g, h, kind="thermal"))
    total_cap = sum(o.p_max for o in offers)
    big = math.ceil(total_cap / (1.0 - margin)) + 1.0
    pairs = []
    for i in range(1, nodes):
        pairs.append((int(rng.integers(i)), i))
    extra = nodes // 3
    for _ in range(extra):
        a, b = sorted(int(v) for v in rng.choice(nodes, 2, replace=False)) if nodes > 1 else (0, 0)
        if a != b and (a, b) not in pairs:
            pairs.append((a, b))
    lines = []
    for a, b in pairs:
        small = float(rng.uniform(10, 40))
        limit = round((1 - c) * big + c * small, 1)
        lines.append(Line(node_ids[a], node_ids[b], round(float(rng.uniform(5, 20)), 2), limit))
    net = Network(node_objs, lines, margin=margin)
    flex_cap = {}
    for o in offers:
        if o.p_min == 0.0:
            flex_cap[o.node_id] = flex_cap.get(o.node_id, 0.0) + o.p_max
    buyers = []
    for n in node_ids:
        if n not in flex_cap:
            continue
        peak = float(rng.uniform(0.3, 0.8)) * flex_cap[n]
        shape = rng.uniform(0.6, 1.0, size=hours)
        buyers.append(DemandSeries(f"d_{n}", n, tuple(round(float(v), 2) for v in peak * shape)))
    k = int(rng.integers(1, min(3, nodes) + 1))
    order = list(rng.permutation(nodes))
    labels = {}
    for pos, i in enumerate(order):
        labels[node_ids[i]] = f"Z{pos + 1}" if pos < k else f"Z{int(rng.integers(k)) + 1}"
    zones = ZoneMap({n: labels[n] for n in node_ids})
    inst = MarketInstance(net, buyers, offers, tuple(range(hours)), zones=zones,
                          name=f"synthetic-{seed}")
    inst.validate()
    if out_dir is not None:
        write_instance(inst, out_dir, RunConfig(margin=margin))
    return inst
