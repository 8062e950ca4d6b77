"""
Forward and reverse KL near the old policy
==========================================

For small steps both KL directions agree with the Fisher quadratic form, and
the leftover shrinks with the cube of the step.  Further out they separate.
"""

import numpy as np

from ppolab import mw_theory as mw
from ppolab.policy import GaussianPolicy, SoftmaxPolicy
from ppolab.rng import RngStream

p = SoftmaxPolicy(np.array([0.2, -0.4, 0.1]))
d = np.array([1.0, -2.0, 0.5])
d /= np.linalg.norm(d)
print(" step      fwd        rev       quad")
for scale in (1e-2, 5e-3, 1e-1, 1.0):
    r = mw.kl_taylor_check(p, scale * d)
    print(f"{scale:5.3f}  {r['kl_fwd']:.3e}  {r['kl_rev']:.3e}  {r['quad']:.3e}")

###############################################################################
# Gaussian Fisher by Monte Carlo, against diag(1/sigma^2, 2) in (mu, log sigma).
g = GaussianPolicy(0.0, np.log(0.5))
print(mw.fisher_matrix(g, 10 ** 6, RngStream(0)))
