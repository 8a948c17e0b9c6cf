"""
Spectral analysis of the linearised two-jet Kolmogorov flow on the sphere.

Submodules
----------
harmonics       normalised associated Legendre data and quadrature
operators       banded per-mode operators and spectral vectors
numkernels      singular values, Hermitian eigenvalues, matrix exponential
pseudospectrum  resolvent sweeps, envelopes, coercive constants
semigroup       propagator norms, decay certificates, scaling studies
cli             command-line front end
"""

__version__ = "0.1.0"
