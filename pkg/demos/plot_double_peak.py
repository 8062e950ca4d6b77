"""
Initialization decides the peak
===============================

The double-peak landscape has its best mode at -2 and a slightly lower one at
+1.  A standard-normal Gaussian starts next to +1 and climbs it; a Beta
policy that starts near uniform over [-5, 5] sees both peaks.
"""

import os

import numpy as np

from ppolab import experiments as ex
from ppolab import svg
from ppolab.envs import DoublePeakBandit
from ppolab.surrogate import Clip

OUT = os.environ.get("DEMO_OUT", "demo_output")
os.makedirs(OUT, exist_ok=True)

env = DoublePeakBandit()
grid = np.linspace(env.lo, env.hi, 401)
svg.write(os.path.join(OUT, "double_peak_landscape.svg"),
          svg.line_plot({"mean reward": (grid, env.mean_reward(grid))}, "double peak", "action", "reward"))

for policy in ("gaussian", "beta"):
    cfg = ex.ExperimentConfig("failure2", policy, Clip(0.2), runs=5, seed=2)
    for o in ex.run_many(cfg, jobs=1):
        v = o.verdict
        print(f"{policy:8s} run {o.run_index}: mean {v['mean']:+.2f} mode {v['mode']:+.2f}")
