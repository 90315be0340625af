import json
import os

import pytest

from gridclear.cases import ex_uc3
from gridclear.ingest import RunConfig, load_instance, write_instance
from gridclear.pipeline import parse_configuration, run_pipeline

CONFIGS = ["national", "zonal:zones_2.csv", "zonal:zones_3.csv", "nodal"]


def test_ex_b_totals(ex_b_dir, tmp_path):
    cfg = RunConfig(margin=0.0, interconnector_fraction=1.0, mip_gap=0.0,
                    redispatch_flow_cap="physical")
    summary, failed = run_pipeline(load_instance(ex_b_dir, cfg), cfg, CONFIGS,
                                   out_dir=tmp_path, case_dir=ex_b_dir)
    assert failed == 0
    cells = summary["cells"]
    totals = {k: v["total_cost"] for k, v in cells.items()}
    assert totals == {"national": 2300.0, "zonal:zones_2": 2300.0, "zonal:zones_3": 2500.0,
                      "nodal": 2100.0}
    for label, cell in cells.items():
        rd = cell["redispatch"]["min_cost"]["cost"]
        assert cell["total_cost"] == pytest.approx(cell["generation_cost"] + rd)
    assert cells["nodal"]["redispatch"] == {"min_cost": {"cost": 0.0, "volume": 0.0},
                                            "min_volume": {"cost": 0.0, "volume": 0.0}}
    assert sorted(os.listdir(tmp_path)) == ["outcomes.csv", "prices.csv", "settlement.csv",
                                            "summary.json"]
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["cells"]["zonal:zones_3"]["total_cost"] == 2500.0


def test_ex_uc3_mwp_row():
    cfg = RunConfig(margin=0.0, mip_gap=0.0)
    summary, failed = run_pipeline(ex_uc3(), cfg, ["national"])
    rules = summary["cells"]["national"]["rules"]
    assert {r: rules[r]["mwp_total"] for r in rules} == {"ip": 100.0, "ch": 80.0, "join": 80.0,
                                                         "euphemia": 0.0}
    assert rules["euphemia"]["welfare_loss"] == 50.0


def test_failed_cell_recorded_others_continue(ex_b_dir):
    cfg = RunConfig(margin=0.0, interconnector_fraction=1.0, mip_gap=0.0)
    inst = load_instance(ex_b_dir, cfg)
    summary, failed = run_pipeline(inst, cfg, ["national", "zonal:/no/such/zones.csv"])
    assert failed == 1
    assert summary["cells"]["zonal:zones"]["errors"]
    assert summary["cells"]["national"]["errors"] == []


def test_bad_configuration_rejected():
    with pytest.raises(ValueError):
        parse_configuration("regional")
    with pytest.raises(ValueError):
        run_pipeline(ex_uc3(), RunConfig(), ["national"], rules=["ip", "vcg"])


def test_parallel_matches_serial_bytes(tmp_path, ex_b_dir):
    cfg = RunConfig(margin=0.0, interconnector_fraction=1.0, mip_gap=0.0,
                    redispatch_flow_cap="physical")
    inst = load_instance(ex_b_dir, cfg)
    run_pipeline(inst, cfg, CONFIGS, out_dir=tmp_path / "a", case_dir=ex_b_dir)
    run_pipeline(inst, cfg, CONFIGS, out_dir=tmp_path / "b", case_dir=ex_b_dir, jobs=3)
    for name in os.listdir(tmp_path / "a"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
