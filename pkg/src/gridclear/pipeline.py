"""Experiment runner: clearing, redispatch, pricing and settlement per configuration.

Every configuration is one cell.  Cells run independently (optionally in
worker processes) and a failing cell is recorded without stopping the rest.
Outputs are written in a fixed order with fixed float formatting, so equal
inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .clearing import clear_national, clear_nodal, clear_zonal
from .euphemia import run_euphemia
from .ingest import RunConfig, load_zone_map
from .pricing import prices_for, settle
from .redispatch import redispatch_min_cost, redispatch_min_volume
from .reporting import price_stats

RULES = ("ip", "ch", "join", "euphemia")


@dataclass(frozen=True)
class CellSpec:
    label: str
    config: str                 # national | zonal | nodal
    zones_path: str | None = None


def parse_configuration(text, case_dir=None):
    """'national', 'nodal', 'zonal' (the case's own zones) or 'zonal:<zones.csv>'."""
    if text in ("national", "nodal"):
        return CellSpec(text, text)
    if text == "zonal":
        return CellSpec("zonal", "zonal")
    if text.startswith("zonal:"):
        path = text.split(":", 1)[1]
        if case_dir is not None and not os.path.isabs(path) and not os.path.exists(path):
            path = os.path.join(case_dir, path)
        stem = os.path.splitext(os.path.basename(path))[0]
        return CellSpec(f"zonal:{stem}", "zonal", path)
    raise ValueError(f"unknown configuration {text!r}")


@dataclass
class CellResult:
    label: str
    summary: dict = field(default_factory=dict)
    outcome_rows: list = field(default_factory=list)
    price_rows: list = field(default_factory=list)
    settlement_rows: list = field(default_factory=list)
    errors: list = field(default_factory=list)


def _f(x):
    return f"{float(x):.6f}"


def _r(x):
    v = round(float(x), 6)
    return 0.0 if v == 0 else v


def run_cell(instance, cell, config, rules):
    res = CellResult(cell.label)
    summ = res.summary
    summ["configuration"] = cell.config
    try:
        zones = instance.zones
        if cell.zones_path:
            zones = load_zone_map(cell.zones_path, instance.network)
        if cell.config == "national":
            outcome = clear_national(instance, gap=config.mip_gap)
        elif cell.config == "zonal":
            outcome = clear_zonal(instance, zones, config.interconnector_fraction,
                                  gap=config.mip_gap)
        else:
            outcome = clear_nodal(instance, gap=config.mip_gap)
    except Exception as exc:   # recorded per cell, the pipeline goes on
        res.errors.append(f"clearing: {exc}")
        summ["errors"] = res.errors
        return res
    summ["generation_cost"] = _r(outcome.generation_cost)
    summ["objective"] = _r(outcome.objective)
    summ["unserved_mwh"] = _r(outcome.total_unserved)
    summ["mip_gap"] = _r(outcome.gap)
    if cell.config == "zonal":
        summ["zones"] = zones.k
    redispatch = {}
    finals = {}
    for name, fn in (("min_cost", redispatch_min_cost), ("min_volume", redispatch_min_volume)):
        if cell.config == "nodal":
            redispatch[name] = {"cost": 0.0, "volume": 0.0}
            finals[name] = outcome.schedule.dispatch
            continue
        try:
            rd = fn(instance, outcome, config.redispatch_flow_cap, config.mip_gap)
            redispatch[name] = {"cost": _r(rd.cost), "volume": _r(rd.volume)}
            finals[name] = rd.schedule.dispatch
        except Exception as exc:
            res.errors.append(f"redispatch {name}: {exc}")
            finals[name] = np.full_like(outcome.schedule.dispatch, np.nan)
    summ["redispatch"] = redispatch
    summ["redispatch_flow_cap"] = config.redispatch_flow_cap
    if "min_cost" in redispatch and "cost" in redispatch["min_cost"]:
        summ["total_cost"] = _r(outcome.generation_cost + redispatch["min_cost"]["cost"])
    for s, offer in enumerate(instance.sellers):
        for t, hour in enumerate(instance.hours):
            res.outcome_rows.append([
                cell.label, offer.seller_id, hour, _f(outcome.schedule.dispatch[s, t]),
                int(outcome.schedule.commitment[s, t]), _f(finals["min_cost"][s, t]),
                _f(finals["min_volume"][s, t])])
    rule_summ = {}
    for rule in rules:
        try:
            if rule == "euphemia":
                if cell.config == "nodal":
                    rule_summ[rule] = {"skipped": "uniform pricing needs zones"}
                    continue
                eu = run_euphemia(instance, zones if cell.config == "zonal" else None,
                                  config.mip_gap, interconnector_fraction=
                                  config.interconnector_fraction)
                prices, st = eu.prices, eu.settlement
                extra = {"iterations": eu.iterations, "welfare_loss": _r(eu.welfare_loss),
                         "cuts": [list(c) for c in eu.cuts],
                         "paradoxically_rejected": eu.paradoxically_rejected,
                         "converged": eu.converged}
            else:
                prices = prices_for(rule, instance, outcome)
                st = settle(instance, outcome, prices)
                extra = {}
        except Exception as exc:
            res.errors.append(f"pricing {rule}: {exc}")
            continue
        stats = price_stats(prices, config.price_cap_eur_mwh)
        rule_summ[rule] = {
            "mwp_total": _r(st.total_mwp), "gloc_total": _r(st.total_gloc),
            "lloc_total": _r(st.total_lloc), "join_objective": _r(st.join_objective),
            "stats": {k: (_r(v) if isinstance(v, float) else v)
                      for k, v in stats.as_dict().items()},
            **extra}
        for i, loc in enumerate(prices.locations):
            for t, hour in enumerate(instance.hours):
                res.price_rows.append([cell.label, rule, loc, hour, _f(prices.values[i, t])])
        for row in st.rows:
            res.settlement_rows.append([cell.label, rule, row.participant, row.kind,
                                        _f(row.utility), _f(row.gloc), _f(row.lloc),
                                        _f(row.mwp)])
    summ["rules"] = rule_summ
    summ["errors"] = res.errors
    return res


def _run_cell_args(args):
    try:
        return run_cell(*args)
    except Exception as exc:
        msg = f"unexpected failure: {exc!r}"
        return CellResult(args[1].label, {"errors": [msg]}, errors=[msg])


OUTCOME_HEADER = ["configuration", "seller_id", "hour", "dispatch_mwh", "commitment",
                  "min_cost_dispatch_mwh", "min_volume_dispatch_mwh"]
PRICE_HEADER = ["configuration", "rule", "location", "hour", "price_eur_mwh"]
SETTLEMENT_HEADER = ["configuration", "rule", "participant", "kind", "utility_eur", "gloc_eur",
                     "lloc_eur", "mwp_eur"]


def run_pipeline(instance, config, configurations, rules=RULES, out_dir=None, jobs=1,
                 case_dir=None):
    """Run every configuration cell; returns (summary dict, failed cell count)."""
    config = config or RunConfig()
    for r in rules:
        if r not in RULES:
            raise ValueError(f"unknown pricing rule {r!r}")
    cells = [parse_configuration(c, case_dir) for c in configurations]
    labels = [c.label for c in cells]
    if len(set(labels)) != len(labels):
        raise ValueError("configurations must be distinct")
    args = [(instance, cell, config, tuple(rules)) for cell in cells]
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell_args, args))
    else:
        results = [_run_cell_args(a) for a in args]
    summary = {"instance": instance.name, "config": config.to_json(),
               "configurations": labels, "rules": list(rules),
               "cells": {r.label: r.summary for r in results}}
    failed = sum(1 for r in results if r.errors)
    summary["failed_cells"] = failed
    if out_dir is not None:
        write_bundle(out_dir, summary, results)
    return summary, failed


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_bundle(out_dir, summary, results):
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(os.path.join(out_dir, "outcomes.csv"), OUTCOME_HEADER,
               [row for r in results for row in r.outcome_rows])
    _write_csv(os.path.join(out_dir, "prices.csv"), PRICE_HEADER,
               [row for r in results for row in r.price_rows])
    _write_csv(os.path.join(out_dir, "settlement.csv"), SETTLEMENT_HEADER,
               [row for r in results for row in r.settlement_rows])
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
