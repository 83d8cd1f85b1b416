"""
From bids to coalition features
===============================

A coalition is a group of k firms that met in at least ``min_joint``
tenders. Each coalition gets its own screens, computed only on the bids its
members placed in the tenders they shared, and those per-tender values are
collapsed into mean/median/min/max features.
"""

# %%
import math

from coalscreen import build_feature_table, build_index, enumerate_coalitions, gen_market, scenario
from coalscreen.data import BidRow, Dataset

market = gen_market(scenario("acceptance"))
print(len(market.tenders), "tenders,", len(market.firms), "firms,", market.n_rows, "bids")

index = build_index(market)
triplets = enumerate_coalitions(index, k=3, min_joint=3)
print(len(triplets), "triplets met at least three times, e.g.", triplets[0].members, triplets[0].tender_ids[:5])

# %%
# When every firm bids everywhere, the count is simply n choose k.
everyone = Dataset.from_rows(BidRow(f"T{t}", f"F{f:02d}", 1.0, False) for t in range(3) for f in range(75))
n3 = len(enumerate_coalitions(build_index(everyone), 3))
print(n3, math.comb(75, 3))

# %%
# The feature table: one row per coalition, 36 columns named <screen>_<stat>.
table = build_feature_table(market)
print(table.feature_names[:6], "...")
labels, counts = zip(*sorted({lab: int((table.labels == lab).sum()) for lab in set(table.labels)}.items()))
print(dict(zip(labels, counts)))

# Extended statistics add six percentiles per screen.
print(len(build_feature_table(market, stats="extended").feature_names), "extended features")

# %%
# Tables round-trip through CSV.
csv_text = table.to_csv()
print(csv_text.splitlines()[0][:120])
