"""
Sweep the resolvent norm along the imaginary axis and compare with the
three-branch envelope.

Run with ``python3 demos/pseudospectral_bound.py`` (about ten seconds).
"""

import numpy as np

from kolmosphere.pseudospectrum import envelope_G, fit_envelope_constant, sweep

for alpha in (1e2, 1e3, 1e4):
    res = sweep(alpha, 1)
    c_star = fit_envelope_constant(res)
    print(f"alpha={alpha:8.0f}  psi={res.psi:9.3f}  psi/sqrt(alpha)={res.psi / alpha**0.5:.3f}  "
          f"C*={c_star:.3f}  n_hi={res.n_hi_used}  converged={res.converged}")

# shape of the sweep at alpha = 1e3: the envelope tracks the norm everywhere
res = sweep(1e3, 1)
for mu in (0.0, 0.5, 0.9, 1.0, 1.1, 2.0, 5.0):
    k = int(np.argmin(np.abs(res.mu_grid - mu)))
    g = envelope_G(1e3, 1, res.mu_grid[k])
    print(f"mu={res.mu_grid[k]:6.3f}  norm={res.norms[k]:.3e}  G={g:.3e}  ratio={res.norms[k] / g:.3f}")
