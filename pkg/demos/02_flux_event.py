# %% [markdown]
# Flux through cube faces.
#
# In a divergence-free field every closed surface carries zero net flux.  The
# event checked here asks that no face of a cube of radius between R0 and R1
# near the origin carries more than eps times its area.

# %%
import numpy as np

from ghomog.env import build_environment
from ghomog.flux import check_flux_event, cube_closure

env = build_environment(seed=3, amplitude=1.0)
print("closure of a radius-2 cube:", cube_closure(env, np.zeros(2), 2.0))

# %% A small gradient part makes faces leak.  Its bumps are radial, so a face
# through a lattice site sees no net gradient flux: use a pitch that is not
# commensurate with the lattice.
for knob in (0.0, 0.3):
    env = build_environment(seed=3, amplitude=1.0, div_knob=knob)
    for R0 in (2.0, 4.0):
        rep = check_flux_event(env, R1=8.0, R0=R0, eps=0.25, grid_steps=4, pitch=0.3)
        print(f"div_knob={knob} R0={R0}: holds={rep.holds} worst ratio={rep.worst_ratio:.3f}")
