"""
Collapse on a bounded single-peak bandit
========================================

A Gaussian policy trained with the clipped surrogate climbs onto the narrow
reward peak at -0.9 and then often falls off it again.  The same setup with a
reverse-KL penalty, or with a Beta policy that lives on the action interval,
stays on the peak.
"""

import os

import numpy as np

from ppolab import experiments as ex
from ppolab import svg
from ppolab.surrogate import Clip, ReverseKL

OUT = os.environ.get("DEMO_OUT", "demo_output")
os.makedirs(OUT, exist_ok=True)
RUNS = 6

###############################################################################
# Three configurations, same seeds.  Each run records the policy's mean reward
# on a fixed probe grid once per iteration.
setups = {
    "clip + gaussian": ex.ExperimentConfig("failure1", "gaussian", Clip(0.2), runs=RUNS, seed=1),
    "rkl(3) + gaussian": ex.ExperimentConfig("failure1", "gaussian", ReverseKL(3.0), runs=RUNS, seed=1),
    "clip + beta": ex.ExperimentConfig("failure1", "beta", Clip(0.2), runs=RUNS, seed=1),
}
results = {name: ex.run_many(cfg, jobs=1) for name, cfg in setups.items()}

for name, outs in results.items():
    s = ex.summarize(outs)
    print(f"{name:18s} end reward >= 0.7 in {s['converged']}/{s['runs']} runs, "
          f"collapsed {s.get('collapsed', 0)}")

###############################################################################
# Median probe reward across runs, per iteration.
series = {}
for name, outs in results.items():
    probe = np.array([o.result.probe_rewards for o in outs])
    series[name] = (np.arange(probe.shape[1]), np.nanmedian(probe, axis=0))
svg.write(os.path.join(OUT, "single_peak_probe.svg"),
          svg.line_plot(series, "median probe reward", ylabel="reward"))

###############################################################################
# Where does the collapsing Gaussian go?  Once it leaves the peak its mean
# wanders, often well outside the action interval.
outs = results["clip + gaussian"]
for o in outs:
    mean, _ = ex.policy_location(o.result.final_params)
    print(f"run {o.run_index}: final mean {mean:+.2f}, collapsed {o.verdict['collapsed']}")
