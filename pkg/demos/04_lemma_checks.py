"""
Numerical checks of the supporting inequalities
===============================================

Every check samples instances, evaluates both sides independently and reports
the worst case. The same registry backs ``logitbandits verify``.
"""
import numpy as np

from logitbandits.lemma_lab import LEMMA2_NOTE, elliptical_bound, elliptical_lhs, run_checks

for rep in run_checks(trials=2000, seed=0):
    print(rep.line())
print(LEMMA2_NOTE)

# the potential sum for a constant unit vector is the harmonic series
xs = np.ones((1, 10, 1))
print(f"\nsum of capped leverages, x_t = 1, T = 10: {elliptical_lhs('potential', xs, 1.0)[0]:.4f} "
      f"<= {elliptical_bound('potential', 10, 1, 1, 1.0):.4f}")
