"""
The command line, end to end
============================

Generate a market, build features, evaluate, save a model and score new
coalitions. Equivalent shell commands are printed as they run.
"""

# %%
import shlex
import tempfile
from pathlib import Path

from coalscreen.cli import main

work = Path(tempfile.mkdtemp(prefix="coalscreen-demo-"))
config = work / "run.json"
config.write_text('{"experiment": {"reps": 5, "learners": {"forest": {"n_trees": 200}}}}')


def run(*argv):
    print("$ coalscreen", shlex.join(str(a) for a in argv))
    code = main([str(a) for a in argv])
    print("exit", code)


# %%
run("synth", "incomplete", "-o", work / "bids.csv", "--seed", 11)
run("validate", work / "bids.csv")
run("features", work / "bids.csv", "-o", work / "features.csv")

# %%
run("evaluate", work / "features.csv", "--config", config, "--output-dir", work / "eval",
    "--algorithms", "forest,lasso", "--save-model", work / "forest.json")
print(sorted(p.name for p in (work / "eval").iterdir()))

# %%
# A second market, scored with the saved model.
run("synth", "incomplete", "-o", work / "new_bids.csv", "--seed", 12)
run("features", work / "new_bids.csv", "-o", work / "new_features.csv")
run("score", work / "new_features.csv", work / "forest.json", "-o", work / "scores.csv")
print("\n".join((work / "scores.csv").read_text().splitlines()[:5]))

# %%
# Bad input is exit code 1.
run("synth", "no-such-preset")
