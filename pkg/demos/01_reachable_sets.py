# %% [markdown]
# Reachable sets of the G equation.
#
# A particle moves with velocity alpha + V(x), |alpha| <= 1.  We grow the set
# of points it can reach from the origin, first with no drift (a disc of
# radius t) and then in a random cellular flow.

# %%
import numpy as np

from ghomog.env import ConstantField, build_environment
from ghomog.frontprop import Grid, evolve_front, reachable_volume, waiting_time

h = 1 / 16
grid = Grid.centered(6.0, h)

# %% no drift: the arrival time at y is |y|
front = evolve_front(ConstantField([0.0, 0.0]), grid, np.zeros(2), 4.0)
for t in (1.0, 2.0, 4.0):
    print(f"t={t}: area {reachable_volume(front, t):.3f}  vs  pi t^2 = {np.pi * t * t:.3f}")

# %% a random divergence-free flow of amplitude 2
env = build_environment(seed=7, amplitude=2.0)
front = evolve_front(env, grid, np.zeros(2), 4.0)
for t in (1.0, 2.0, 4.0):
    print(f"t={t}: area {reachable_volume(front, t):.3f}")

# %% The flow can trap the particle for a while; W is the time to fill the
# unit-diameter ball around the start.
for seed in range(5):
    W = waiting_time(build_environment(seed, amplitude=2.0), Grid.centered(3.0, h), x=[0.3, 0.1])
    print(f"seed {seed}: W = {W:.3f}")

# %% optional picture
try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    lo, hi = grid.bounds
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.contour(np.where(np.isfinite(front.arrival), front.arrival, 99).T, levels=[1, 2, 3, 4],
               extent=(lo[0], hi[0], lo[1], hi[1]))
    ax.set_aspect("equal")
    fig.savefig("reachable_sets.svg")
    print("wrote reachable_sets.svg")
