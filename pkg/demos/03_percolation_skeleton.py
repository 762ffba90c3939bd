# %% [markdown]
# Good sites and skeleton paths.
#
# A lattice site is "open" when every probe pair around it is connected
# quickly by the dynamics.  Open clusters give coarse skeleton paths: short
# hops that stay near the open cluster and follow a straight segment.

# %%
import numpy as np

from ghomog.env import build_environment
from ghomog.percolation import (big_open_cluster, clusters, good_site_field, skeleton_path,
                                synthetic_field)

field = synthetic_field(seed=1, shape=(40, 40), p=0.8, lo=(-20, -20))
sizes = sorted((c.size for c in clusters(field) if c.is_open), reverse=True)
print("open fraction", field.open.mean().round(3), "largest open clusters", sizes[:3])

# %%
# endpoints must sit near a common open cluster; take two far apart sites of the largest one
big = max((c for c in clusters(field) if c.is_open), key=lambda c: c.size)
x, y = big.sites[0], big.sites[-1]
path = skeleton_path(field, x, y)
print("from", x, "to", y)
print(f"{path.k} hops, length {path.length:.2f}, longest hop {path.max_gap():.2f}, detours {path.detours}")

# %% The same thing from an actual flow (slow part: one probe front per site).
env = build_environment(seed=2, amplitude=2.0)
good = good_site_field(env, (-4, -4), (9, 9), tau=2.6, h=1 / 8)
print("open fraction in the flow:", good.open.mean().round(3))
res = big_open_cluster(good, R=2, n=2)
print("big cluster condition:", res.status, "max bad run", res.max_bad)
