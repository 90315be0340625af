"""
Prices for a market with a start-up cost
========================================

One node, one hour, 60 MWh of demand.  G1 is cheap and small; G2 has to run
for the last 10 MWh and carries a 100 EUR fixed cost.  No single price
covers G2's fixed cost without paying someone not to produce, so every
pricing rule leaves someone short.
"""
import numpy as np

from gridclear.cases import ex_uc, ex_uc3
from gridclear.clearing import clear_national
from gridclear.euphemia import run_euphemia
from gridclear.pricing import ch_prices, ip_prices, join_prices, settle

inst = ex_uc()
out = clear_national(inst, gap=0.0)
print("dispatch", out.schedule.dispatch[:, 0], "objective", out.objective)

for rule in (ip_prices, ch_prices, join_prices):
    prices = rule(inst, out)
    st = settle(inst, out, prices)
    print(f"{prices.rule:>4}: price {prices.values[0, 0]:6.2f}  "
          f"MWP {st.total_mwp:6.2f}  GLOC {st.total_gloc:6.2f}  "
          f"sum max(LLOC, MWP) {st.join_objective:6.2f}")

# %%
# The same numbers by brute force: sweep the price and evaluate each
# seller's best choice (off, on at zero, on at capacity).
def lost_opportunity(p):
    total = 0.0
    for g, h, y in ((10.0, 0.0, 50.0), (20.0, 100.0, 10.0)):
        utility = (p - g) * y - h
        total += max(0.0, (p - g) * 50.0 - h, -h) - utility
    return total

grid = np.arange(0.0, 40.0, 0.5)
best = grid[np.argmin([lost_opportunity(p) for p in grid])]
print("price minimising total lost opportunity:", best)

# %%
# Add a 35 EUR/MWh peaker.  Uniform pricing without side payments
# (the iterative cut-and-reclear scheme) pushes G2 out and lets the peaker
# set the price.  The market gets 50 EUR more expensive, and G2 would have
# liked to run at that price.
eu = run_euphemia(ex_uc3(), gap=0.0)
print("iterations", eu.iterations, "price", eu.prices.values[0, 0],
      "welfare loss", eu.welfare_loss, "rejected but profitable", eu.paradoxically_rejected)
