"""Command line front end.

    gridclear [global flags] <subcommand> ...

Exit status: 0 on success, 2 when some pipeline cells failed, 1 on a
configuration or input error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from .clearing import clear
from .euphemia import run_euphemia
from .grid import validate_network
from .ingest import (FLOW_CAP_MODES, GridUnit, MappingInfeasible, RunConfig, SellerCategory,
                     UnitMappingProblem, gen_synthetic, load_config, load_instance,
                     load_zone_map, map_units)
from .pipeline import (OUTCOME_HEADER, PRICE_HEADER, RULES, SETTLEMENT_HEADER, _f,
                       run_pipeline, _write_csv)
from .pricing import PriceSurface, prices_for, settle
from .redispatch import feasibility_check, redispatch_min_cost, redispatch_min_volume
from .reporting import price_stats, variance_decomposition


class ConfigurationError(Exception):
    pass


def _global_flags(parser, suppress):
    d = argparse.SUPPRESS if suppress else None
    g = parser.add_argument_group("global")
    g.add_argument("--config", default=d, help="config.json overriding the case's own")
    g.add_argument("--out-dir", default=d, help="directory for output files")
    g.add_argument("--mip-gap", type=float, default=d)
    g.add_argument("--margin", type=float, default=d)
    g.add_argument("--redispatch-flow-cap", choices=FLOW_CAP_MODES, default=d)
    g.add_argument("--price-cap", type=float, default=d)
    g.add_argument("--seed", type=int, default=d)


def build_parser():
    p = argparse.ArgumentParser(prog="gridclear", description=__doc__.split("\n")[0])
    _global_flags(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        _global_flags(sp, suppress=True)
        return sp

    def case(sp, zones=True):
        sp.add_argument("case_dir")
        sp.add_argument("--configuration", choices=("national", "zonal", "nodal"),
                        default="nodal")
        if zones:
            sp.add_argument("--zones", help="zones.csv to use instead of the case's own")
            sp.add_argument("--interconnector-fraction", type=float)

    sp = add("clear", "clear one configuration and write its outcome")
    case(sp)
    sp = add("redispatch", "clear, then redispatch to a network-feasible schedule")
    case(sp)
    sp.add_argument("--objective", choices=("min_cost", "min_volume"), default="min_cost")
    sp = add("price", "clear, price with one rule and settle")
    case(sp)
    sp.add_argument("--rule", choices=RULES[:3], default="ip")
    sp = add("euphemia", "iterative uniform-price clearing with paradox cuts")
    sp.add_argument("case_dir")
    sp.add_argument("--zones")
    sp.add_argument("--national", action="store_true", help="ignore zones, one price area")
    sp.add_argument("--interconnector-fraction", type=float)
    sp = add("pipeline", "all configurations x pricing rules, written as a result bundle")
    sp.add_argument("case_dir")
    sp.add_argument("--configurations", nargs="+", default=["national", "zonal", "nodal"])
    sp.add_argument("--rules", nargs="+", default=list(RULES))
    sp.add_argument("--jobs", type=int, default=1)
    sp = add("map-units", "assign grid units to seller categories (JSON problem file)")
    sp.add_argument("problem")
    sp = add("gen-synthetic", "write a random case directory")
    sp.add_argument("--nodes", type=int, default=6)
    sp.add_argument("--sellers", type=int, default=5)
    sp.add_argument("--hours", type=int, default=4)
    sp.add_argument("--congestion", type=float, default=0.5)
    sp = add("stats", "price statistics from a prices.csv")
    sp.add_argument("prices_csv")
    sp.add_argument("--zones", help="zones.csv for zone-grouped dispersion")
    sp = add("validate", "load a case directory and report problems")
    sp.add_argument("case_dir")
    return p


def _config(args, case_dir=None):
    path = args.config or (os.path.join(case_dir, "config.json") if case_dir else None)
    cfg = load_config(path)
    over = {"mip_gap": args.mip_gap, "margin": args.margin,
            "redispatch_flow_cap": args.redispatch_flow_cap,
            "price_cap_eur_mwh": args.price_cap,
            "interconnector_fraction": getattr(args, "interconnector_fraction", None)}
    over = {k: v for k, v in over.items() if v is not None}
    return dataclasses.replace(cfg, **over)


def _load(args):
    cfg = _config(args, args.case_dir)
    inst = load_instance(args.case_dir, cfg)
    zones = inst.zones
    if getattr(args, "zones", None):
        zones = load_zone_map(args.zones, inst.network)
    return cfg, inst, zones


def _emit(args, name, payload):
    text = json.dumps(payload, indent=2, sort_keys=True)
    print(text)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        with open(os.path.join(args.out_dir, name), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _clear(args, cfg, inst, zones):
    if args.configuration == "zonal" and zones is None:
        raise ConfigurationError("zonal clearing needs zones.csv in the case or --zones")
    return clear(inst, args.configuration, zones, cfg.interconnector_fraction, cfg.mip_gap)


def _outcome_rows(inst, outcome, label, final=None):
    final = outcome.schedule.dispatch if final is None else final
    return [[label, o.seller_id, h, _f(outcome.schedule.dispatch[s, t]),
             int(outcome.schedule.commitment[s, t]), _f(final[s, t]), _f(final[s, t])]
            for s, o in enumerate(inst.sellers) for t, h in enumerate(inst.hours)]


def _outcome_summary(outcome):
    return {"configuration": outcome.tag, "objective": round(outcome.objective, 6),
            "generation_cost": round(outcome.generation_cost, 6),
            "unserved_mwh": round(outcome.total_unserved, 6), "mip_gap": round(outcome.gap, 6)}


def cmd_clear(args):
    cfg, inst, zones = _load(args)
    outcome = _clear(args, cfg, inst, zones)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        _write_csv(os.path.join(args.out_dir, "outcomes.csv"), OUTCOME_HEADER,
                   _outcome_rows(inst, outcome, outcome.tag))
    _emit(args, "clear.json", _outcome_summary(outcome))
    return 0


def cmd_redispatch(args):
    cfg, inst, zones = _load(args)
    outcome = _clear(args, cfg, inst, zones)
    fn = redispatch_min_cost if args.objective == "min_cost" else redispatch_min_volume
    rd = fn(inst, outcome, cfg.redispatch_flow_cap, cfg.mip_gap)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        _write_csv(os.path.join(args.out_dir, "outcomes.csv"), OUTCOME_HEADER,
                   _outcome_rows(inst, outcome, outcome.tag, rd.schedule.dispatch))
    out = _outcome_summary(outcome)
    out.update({"redispatch_objective": args.objective, "redispatch_cost": round(rd.cost, 6),
                "redispatch_volume": round(rd.volume, 6),
                "total_cost": round(rd.total_cost, 6), "flow_cap": rd.flow_cap})
    _emit(args, "redispatch.json", out)
    return 0


def _settlement_rows(label, rule, st):
    return [[label, rule, r.participant, r.kind, _f(r.utility), _f(r.gloc), _f(r.lloc),
             _f(r.mwp)] for r in st.rows]


def _price_rows(label, rule, prices, hours):
    return [[label, rule, loc, h, _f(prices.values[i, t])]
            for i, loc in enumerate(prices.locations) for t, h in enumerate(hours)]


def cmd_price(args):
    cfg, inst, zones = _load(args)
    outcome = _clear(args, cfg, inst, zones)
    prices = prices_for(args.rule, inst, outcome)
    st = settle(inst, outcome, prices)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        _write_csv(os.path.join(args.out_dir, "prices.csv"), PRICE_HEADER,
                   _price_rows(outcome.tag, args.rule, prices, inst.hours))
        _write_csv(os.path.join(args.out_dir, "settlement.csv"), SETTLEMENT_HEADER,
                   _settlement_rows(outcome.tag, args.rule, st))
    out = _outcome_summary(outcome)
    out.update({"rule": args.rule, "mwp_total": round(st.total_mwp, 6),
                "gloc_total": round(st.total_gloc, 6), "lloc_total": round(st.total_lloc, 6),
                "join_objective": round(st.join_objective, 6),
                "stats": price_stats(prices, cfg.price_cap_eur_mwh).as_dict()})
    _emit(args, "price.json", out)
    return 0


def cmd_euphemia(args):
    cfg = _config(args, args.case_dir)
    inst = load_instance(args.case_dir, cfg)
    zones = None if args.national else inst.zones
    if args.zones and not args.national:
        zones = load_zone_map(args.zones, inst.network)
    res = run_euphemia(inst, zones, cfg.mip_gap,
                       interconnector_fraction=cfg.interconnector_fraction)
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        tag = res.outcome.tag
        _write_csv(os.path.join(args.out_dir, "prices.csv"), PRICE_HEADER,
                   _price_rows(tag, "euphemia", res.prices, inst.hours))
        _write_csv(os.path.join(args.out_dir, "settlement.csv"), SETTLEMENT_HEADER,
                   _settlement_rows(tag, "euphemia", res.settlement))
    out = _outcome_summary(res.outcome)
    out.update({"iterations": res.iterations, "converged": res.converged,
                "cuts": [list(c) for c in res.cuts],
                "welfare_loss": round(res.welfare_loss, 6),
                "paradoxically_rejected": res.paradoxically_rejected,
                "mwp_total": round(res.settlement.total_mwp, 6),
                "flow_warnings": [dataclasses.asdict(w) for w in res.flow_warnings]})
    _emit(args, "euphemia.json", out)
    return 0


def cmd_pipeline(args):
    cfg = _config(args, args.case_dir)
    inst = load_instance(args.case_dir, cfg)
    for r in args.rules:
        if r not in RULES:
            raise ConfigurationError(f"unknown pricing rule {r!r}")
    configurations = list(args.configurations)
    if "zonal" in configurations and inst.zones is None:
        raise ConfigurationError("'zonal' needs zones.csv in the case directory")
    out_dir = args.out_dir or os.path.join(args.case_dir, "results")
    summary, failed = run_pipeline(inst, cfg, configurations, args.rules, out_dir,
                                   jobs=max(1, args.jobs), case_dir=args.case_dir)
    for label, cell in summary["cells"].items():
        state = "failed: " + "; ".join(cell["errors"]) if cell.get("errors") else "ok"
        print(f"{label:>20s}  total {cell.get('total_cost', float('nan')):>14.2f}  {state}")
    print(f"results in {out_dir}")
    return 2 if failed else 0


def load_mapping_problem(path):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    cats = [SellerCategory(c["name"], c["plant_type"], float(c["capacity"]), int(c["units"]))
            for c in data["categories"]]
    units = [GridUnit(u["unit_id"], u.get("plant_type"), float(u["capacity"]))
             for u in data["units"]]
    return UnitMappingProblem(cats, units, float(data.get("max_capacity_deviation", 600.0)),
                              int(data.get("max_count_deviation", 2)))


def cmd_map_units(args):
    cfg = _config(args)
    problem = load_mapping_problem(args.problem)
    try:
        res = map_units(problem, gap=cfg.mip_gap if args.mip_gap is not None else 0.0)
    except MappingInfeasible as exc:
        _emit(args, "mapping.json", {"feasible": False, "binding_categories": exc.categories})
        return 2
    _emit(args, "mapping.json", {
        "feasible": True, "objective": round(res.objective, 6), "assignment": res.assignment,
        "capacity_deviation": {k: round(v, 6) for k, v in res.capacity_deviation.items()},
        "count_deviation": res.count_deviation})
    return 0


def cmd_gen_synthetic(args):
    if not args.out_dir:
        raise ConfigurationError("gen-synthetic needs --out-dir")
    seed = 0 if args.seed is None else args.seed
    margin = 0.2 if args.margin is None else args.margin
    inst = gen_synthetic(seed, args.nodes, args.sellers, args.hours, args.congestion,
                         out_dir=args.out_dir, margin=margin)
    print(f"{inst.name}: {len(inst.network.nodes)} nodes, {len(inst.network.lines)} lines, "
          f"{len(inst.sellers)} sellers, {inst.n_hours} hours -> {args.out_dir}")
    return 0


def _read_prices(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != PRICE_HEADER:
            raise ConfigurationError(f"{path}: header must be {','.join(PRICE_HEADER)}")
        groups = {}
        for rec in reader:
            key = (rec["configuration"], rec["rule"])
            groups.setdefault(key, []).append(
                (rec["location"], int(rec["hour"]), float(rec["price_eur_mwh"])))
    return groups


def cmd_stats(args):
    cap = 100.0 if args.price_cap is None else args.price_cap
    zones = load_zone_map(args.zones) if args.zones else None
    out = {}
    for (label, rule), rows in sorted(_read_prices(args.prices_csv).items()):
        entry = price_stats(np.array([r[2] for r in rows]), cap).as_dict()
        if label == "nodal":
            locs = sorted({r[0] for r in rows})
            hours = sorted({r[1] for r in rows})
            grid = np.full((len(locs), len(hours)), np.nan)
            for loc, h, v in rows:
                grid[locs.index(loc), hours.index(h)] = v
            surf = PriceSurface("nodal", tuple(locs), tuple(hours), grid, rule,
                                {n: i for i, n in enumerate(locs)})
            vd = variance_decomposition(surf, zones, cap)
            entry["congestion_std"] = [round(float(v), 6) for v in vd.congestion]
            entry["temporal_std"] = {n: round(float(v), 6) for n, v in zip(locs, vd.temporal)}
            if zones is not None:
                entry["zone_congestion_std"] = {z: round(v, 6)
                                                for z, v in vd.zone_congestion.items()}
                entry["zone_temporal_std"] = {z: round(v, 6) for z, v in vd.zone_temporal.items()}
        out[f"{label}/{rule}"] = entry
    _emit(args, "stats.json", out)
    return 0


def cmd_validate(args):
    cfg = _config(args, args.case_dir)
    inst = load_instance(args.case_dir, cfg)
    report = validate_network(inst.network)
    demand = inst.node_demand().sum(axis=0)
    cap = np.array([sum(o.p_max_at(t) for o in inst.sellers) for t in range(inst.n_hours)])
    short = [h for h, d, c in zip(inst.hours, demand, cap) if d > c + 1e-9]
    print(f"{inst.name}: {len(inst.network.nodes)} nodes, {len(inst.network.lines)} lines, "
          f"{len(inst.sellers)} sellers, {len(inst.buyers)} buyers, {inst.n_hours} hours")
    for msg in report.errors:
        print(f"error: {msg}")
    for msg in report.warnings:
        print(f"warning: {msg}")
    if short:
        print(f"warning: demand exceeds total capacity in hours {short}")
    return 0 if report.ok else 1


COMMANDS = {"clear": cmd_clear, "redispatch": cmd_redispatch, "price": cmd_price,
            "euphemia": cmd_euphemia, "pipeline": cmd_pipeline, "map-units": cmd_map_units,
            "gen-synthetic": cmd_gen_synthetic, "stats": cmd_stats, "validate": cmd_validate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"gridclear: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
