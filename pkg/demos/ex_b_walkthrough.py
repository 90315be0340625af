"""
Six nodes, two bidding-zone splits
==================================

A zonal market only sees the lines between zones.  Whatever it cannot see
has to be fixed afterwards by redispatch, and that can cost more than the
market saved.  This script walks through the six-node example bundled in
``gridclear.cases``.
"""
import numpy as np

from gridclear.cases import ex_b, ex_b_zones
from gridclear.clearing import clear_national, clear_nodal, clear_zonal
from gridclear.grid import cross_zonal_lines
from gridclear.redispatch import feasibility_check, redispatch_min_cost

inst = ex_b()
net = inst.network
for line in net.lines:
    print(f"{line.from_node}-{line.to_node}: {line.limit:g} MW")

# %%
# Nodal clearing respects every line, so it is the cheapest feasible outcome.
nodal = clear_nodal(inst, gap=0.0)
print("nodal generation cost", nodal.generation_cost)
print("dispatch (MWh)", dict(zip([s.seller_id for s in inst.sellers],
                                  nodal.schedule.dispatch[:, 0].tolist())))

# %%
# A single price area ignores the network.  The cheap seller runs flat out
# and the resulting flows overload a line.
national = clear_national(inst, gap=0.0)
report = feasibility_check(inst, national)
print("national generation cost", national.generation_cost)
for v in report.lines:
    print(f"  overload {v.from_node}-{v.to_node}: {v.flow:g} MW against {v.limit:g} MW")

# %%
# Two and three zones.  Only cross-zonal lines enter the clearing.
for k in (2, 3):
    zones = ex_b_zones(k)
    seen = [f"{line.from_node}-{line.to_node}" for line in cross_zonal_lines(net, zones)]
    out = clear_zonal(inst, zones, 1.0, gap=0.0)
    rd = redispatch_min_cost(inst, out, "physical", gap=0.0)
    print(f"{k} zones, cross-zonal lines {seen}")
    print(f"  market cost {out.generation_cost:g}, redispatch {rd.cost:g}, "
          f"total {rd.total_cost:g} EUR")
    moved = np.round(rd.up[:, 0] - rd.down[:, 0], 6)
    print("  redispatch per seller (MWh)",
          dict(zip([s.seller_id for s in inst.sellers], moved.tolist())))

# %%
# Three zones hide the v4-v5 line from the market.  The market cost goes up
# and so does the total.  Both are worse than nodal, which needs no
# redispatch at all.
