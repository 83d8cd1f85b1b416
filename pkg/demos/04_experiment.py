"""
Repeated evaluation
===================

Each repetition downsamples the competitive coalitions to the number of
collusive ones, splits 75/25 within each class, fits every algorithm and
scores the held-out part. Means over repetitions are the headline numbers.
"""

# %%
from coalscreen import ExperimentConfig, build_feature_table, class_medians_report, gen_market, run_experiment
from coalscreen.pipeline import class_medians_csv
from coalscreen.synthgen import ACCEPTANCE

features = build_feature_table(gen_market(ACCEPTANCE))
config = ExperimentConfig(reps=20, seed=7, learners={"forest": {"n_trees": 300}})
report = run_experiment(features, config)
print(report.table_csv())

# %%
# Forest importance, averaged over repetitions and scaled so the top is 100.
for name, value in report.importance[:8]:
    print(f"{name:16s} {value:6.1f}")

# %%
# Collusive coalitions bid closer together.
print(class_medians_csv(class_medians_report(features.pure())))

# %%
# Screen subsets: only the six asymmetry screens, then without diffp/absdiff.
for drop in ((), ("diffp", "absdiff")):
    cfg = ExperimentConfig(algorithms=("forest",), reps=10, screens="asymmetry_only", drop_screens=drop,
                           learners={"forest": {"n_trees": 300}})
    r = run_experiment(features, cfg)
    print(len(r.feature_names), "features, forest CCR", round(r.mean_ccr("forest"), 3))

# %%
# Same config, same seed: same bytes.
print(run_experiment(features, config).to_json() == report.to_json())
