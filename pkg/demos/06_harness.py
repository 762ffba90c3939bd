# %% [markdown]
# Running an experiment through the harness.
#
# Records are appended per seed and keyed by a digest of the configuration,
# so a run can be split, resumed or repeated without changing the output.

# %%
import tempfile

from ghomog.harness.config import parse_config
from ghomog.harness.report import report
from ghomog.harness.runner import run

out = tempfile.mkdtemp()
cfg = parse_config("experiment = waiting-time-tail\namplitude = 2\nh = 0.125\n", {"out": out, "seeds": "0..15"})
first = run(cfg)
print("new records:", len(first.records), "summary keys:", sorted(first.summary)[:6])

# %% asking again does nothing new
again = run(cfg)
print("skipped:", again.skipped, "new:", len(again.records))

# %%
report(out)
print(open(f"{out}/report.md").read()[:600])
