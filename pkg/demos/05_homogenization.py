# %% [markdown]
# Homogenization.
#
# The control formula for u^eps looks at the fast, fine-scale flow; u_bar only
# needs the effective shape.  As eps shrinks the two agree.

# %%
import numpy as np

from ghomog.env import build_environment
from ghomog.homog import linear, solve_u_bar, solve_u_eps
from ghomog.shape import estimate_shape

envs = [build_environment(s, amplitude=1.0) for s in range(8)]
shape, _ = estimate_shape(envs, 32, [4.0, 8.0], h=1 / 8, n_boot=20)

# the shape comes from short radii and few seeds; its bias (a few percent)
# sets a floor on the gap, so do not read a rate off this table
u0 = linear([0.6, 0.8])
x, t = np.array([0.2, -0.1]), 1.0
ubar = solve_u_bar(shape, u0, t, x)
print(f"u_bar = {ubar:.4f}")
for eps in (1 / 2, 1 / 4, 1 / 8):
    vals = [solve_u_eps(env, u0, eps, t, x) for env in envs[:4]]
    print(f"eps={eps:<6} mean |u_eps - u_bar| = {np.mean(np.abs(np.array(vals) - ubar)):.4f}")
