"""
Build the truncated operators for one azimuthal mode and look at them.

Run with ``python3 demos/basis_and_operators.py``.
"""

import math

import numpy as np

from kolmosphere.harmonics import basis_table, gauss_legendre
from kolmosphere.operators import (
    ModeSpace,
    SpectralVector,
    assemble_cos,
    assemble_L,
    assemble_Lambda,
    assemble_sin2_form,
    project_Q,
    write_banded,
)

space = ModeSpace(m=1, n_hi=40)
print(f"mode m={space.m}: degrees {space.n_lo}..{space.n_hi} ({space.dim} unknowns)")

# cos(theta) in the basis agrees with quadrature to rounding
rule = gauss_legendre(space.n_hi + 2)
P = basis_table(space.m, space.n_hi, rule.theta)[space.n_lo - space.m:]
quad = 2 * math.pi * (P * (rule.weights * rule.nodes)) @ P.T
print("max |C - quadrature| =", np.max(np.abs(assemble_cos(space).todense() - quad)))

# Lambda kills Y_2^m, so Q removes exactly that direction
lam = assemble_Lambda(space)
y2 = SpectralVector.basis(space, 2)
print("||Lambda Y_2|| =", np.linalg.norm(lam @ y2.coeffs))
print("||Q Y_2||      =", project_Q(y2).norm())

# the sin^2 form is positive semidefinite
print("min eig of sin^2 form:", np.linalg.eigvalsh(assemble_sin2_form(space).todense())[0])

# a peek at the exported banded text
text = write_banded(assemble_L(ModeSpace(1, 12), alpha=10.0))
print("\n".join(line[:72] for line in text.splitlines()[:9]))
