# %% [markdown]
# The effective shape.
#
# theta(0, R e) / R settles down as R grows; its limit theta_bar(e) traces the
# boundary of the limit shape, whose support function is the effective
# Hamiltonian H_bar.

# %%
import numpy as np

from ghomog.env import ConstantField, build_environment
from ghomog.shape import constant_drift_theta_bar, effective_H, estimate_shape, unit_directions

# %% a constant drift has an exact answer: a unit disc shifted by the drift
c = np.array([0.4, 0.0])
shape, _ = estimate_shape([ConstantField(c)] * 8, 16, [4.0, 8.0], h=1 / 8, n_boot=20)
exact = np.array([constant_drift_theta_bar(e, c) for e in unit_directions(16)])
print("max |theta_bar - exact|:", np.abs(shape.theta_bar - exact).max().round(4))
print("H_bar(1, 0) =", round(float(effective_H(shape, [1.0, 0.0])), 4), " exact", 1 + c[0])

# %% a random flow speeds things up in every direction
envs = [build_environment(s, amplitude=1.0) for s in range(8)]
shape, est = estimate_shape(envs, 16, [4.0, 8.0], h=1 / 8, n_boot=50)
for k in range(0, 16, 4):
    print(f"direction {k}: theta_bar = {est[k].value:.3f} +- {est[k].halfwidth:.3f}")
print("H_bar on the unit circle:", effective_H(shape, unit_directions(8)).round(3))
