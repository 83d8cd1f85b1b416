"""
The classifiers
===============

Seven learners share one contract: ``fit_model(name, X, y, settings, seed)``
returns a model with ``predict_proba`` and ``predict`` and a JSON form.
Everything is written on numpy/scipy, with numba for the inner loops.
"""

# %%
import time

import numpy as np

from coalscreen import MarketParams, balance, build_feature_table, gen_market, split
from coalscreen.learners import ALGORITHMS, fit_model, simplex_least_squares
from coalscreen.pipeline import ccr_metrics

# a six-firm cartel rigging 30% of tenders gives 20 collusive coalitions
market = gen_market(MarketParams(cartel=tuple(range(6)), collusion_share=0.3, seed=3))
table = build_feature_table(market).pure()
train, test = split(balance(table, seed=1), 0.75, seed=1)
print(len(train), "train rows,", len(test), "test rows,", len(train.feature_names), "features")

# %%
quick = {"forest": {"n_trees": 300}, "gbm": {"rounds": 200}}
quick["super"] = {"folds": 5, "base": dict(quick)}
for name in ALGORITHMS:
    t0 = time.perf_counter()
    model = fit_model(name, train.X, train.y, quick.get(name), seed=0)
    m = ccr_metrics(model.predict(test.X), test.y)
    print(f"{name:7s} ccr={m.ccr:.3f} collusion={m.ccr_collusion:.3f} competition={m.ccr_competition:.3f}"
          f"  ({time.perf_counter() - t0:.1f}s)")

# %%
# The super learner blends out-of-fold probabilities with nonnegative weights
# summing to one; the blend can never do worse out of fold than its best member.
# Synthetic cartels are easy to spot, so every learner is perfect here.
sl = fit_model("super", train.X, train.y, quick["super"], seed=0)
print({n: round(float(w), 3) for n, w in zip(sl.names, sl.weights)})
print({k: round(v, 4) for k, v in sl.oof_squared_error().items()})

# %%
# The weight solver on its own: a perfect column takes all the weight.
y = np.array([0, 1, 1, 0, 1], dtype=float)
P = np.column_stack([np.full(5, 0.5), y, 1 - y])
print(simplex_least_squares(P, y))
