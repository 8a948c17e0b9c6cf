"""
Enhanced dissipation: the decay rate of the Q part grows like the
pseudospectral bound, while the kernel direction Y_2^m keeps decaying
like exp(-4t) and feeds a transient into the P part.

Run with ``python3 demos/enhanced_dissipation.py`` (under a minute).
"""

import numpy as np

from kolmosphere.pseudospectrum import sweep
from kolmosphere.semigroup import decay_rate, propagator_curve

print("alpha      psi     sigma  sigma/psi  peak ||PQ|| e^2t")
for alpha in (0.0, 1e2, 1e3, 1e4):
    psi = sweep(alpha, 1).psi if alpha else 10.0
    curve = propagator_curve(alpha, 1, psi=psi)
    est = decay_rate(curve, c_cap=10.0)
    amp = np.max(curve.pq_norms * np.exp(2 * curve.t_grid))
    print(f"{alpha:7.0f} {psi:8.2f} {est.sigma:9.2f} {est.sigma / psi:9.3f} {amp:12.4f}")
