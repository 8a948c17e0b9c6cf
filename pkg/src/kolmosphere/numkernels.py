"""
Linear-algebra kernels: extremal singular values, Hermitian extremal
eigenvalues, operator norms and the matrix exponential.

Small problems go through dense LAPACK.  Large banded problems use a sparse
LU factorisation of ``T`` and Lanczos on ``(T^* T)^{-1}``, whose cost grows
linearly in the dimension.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .operators import BandedOperator

__all__ = [
    "ConvergenceError",
    "DENSE_MAX",
    "NumericalContractError",
    "Tolerance",
    "banded_pencil_min",
    "gram_bands",
    "hermitian_max_ratio",
    "hermitian_min_eig",
    "min_singular_value",
    "operator_norm",
    "propagator",
    "seeded_rng",
]

# above this dimension the sparse path is used
DENSE_MAX = 256
DEFAULT_SEED = 20240611


class NumericalContractError(RuntimeError):
    """A kernel could not certify its accuracy contract."""


class ConvergenceError(NumericalContractError):
    """An iterative kernel stopped before converging."""

    def __init__(self, message, iterations):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations


@dataclass(frozen=True)
class Tolerance:
    """Relative accuracy target, between 1e-14 and 1e-2."""

    rel: float = 1e-12

    def __post_init__(self):
        if not 1e-14 <= self.rel <= 1e-2:
            raise ValueError(f"tolerance {self.rel} outside [1e-14, 1e-2]")


def seeded_rng(seed=None):
    """PCG64 generator; ``None`` means the package default seed."""
    return np.random.default_rng(DEFAULT_SEED if seed is None else seed)


def _as_matrix(T):
    if isinstance(T, BandedOperator):
        return T.tosparse("csc")
    if sp.issparse(T):
        return T.tocsc()
    return np.asarray(T)


def _check_square(M):
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")


def min_singular_value(T, tol=None, maxiter=None, method="auto"):
    """
    Smallest singular value of a square matrix.

    Parameters
    ----------
    T : BandedOperator, sparse matrix or array_like
    tol : Tolerance, optional
    maxiter : int, optional
        Lanczos iteration cap for the sparse path.
    method : {"auto", "gram"}
        ``"gram"`` takes the square root of the smallest eigenvalue of the
        banded matrix ``T^* T`` by bisection.  It is fast at any size but
        only accurate when ``sigma_min`` is not tiny relative to ``||T||``;
        requires a ``BandedOperator``.

    Returns
    -------
    float
        ``sigma_min(T)``; exactly 0 if the LU factorisation is singular.

    Raises
    ------
    ConvergenceError
        If the sparse iteration does not converge.
    """
    tol = tol or Tolerance()
    if method == "gram":
        if not isinstance(T, BandedOperator):
            raise TypeError("method='gram' needs a BandedOperator")
        return float(np.sqrt(max(banded_pencil_min(gram_bands(T), None, tol), 0.0)))
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    M = _as_matrix(T)
    _check_square(M)
    n = M.shape[0]
    if n == 0:
        raise ValueError("empty matrix")
    if n <= DENSE_MAX or not sp.issparse(M):
        dense = M.toarray() if sp.issparse(M) else M
        return float(sla.svdvals(dense)[-1])
    M = M.astype(complex)
    try:
        lu = spla.splu(M)
    except RuntimeError:
        # exactly singular factor
        return 0.0

    def apply(x):
        return lu.solve(lu.solve(x, trans="H"))

    op = spla.LinearOperator((n, n), matvec=apply, dtype=complex)
    maxiter = maxiter or 20 * n
    try:
        w = spla.eigsh(
            op,
            k=1,
            which="LM",
            tol=max(tol.rel / 4, 1e-15),
            v0=np.ones(n, dtype=complex),
            maxiter=maxiter,
            return_eigenvectors=False,
        )
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError("Lanczos for sigma_min did not converge", maxiter) from exc
    top = float(w[0].real)
    if not np.isfinite(top) or top <= 0:
        return 0.0
    return 1.0 / np.sqrt(top)


def operator_norm(M, tol=None):
    """Largest singular value of any rectangular matrix."""
    tol = tol or Tolerance()
    M = _as_matrix(M)
    if M.size == 0 or (sp.issparse(M) and M.nnz == 0):
        return 0.0
    if not sp.issparse(M) or min(M.shape) <= DENSE_MAX:
        dense = M.toarray() if sp.issparse(M) else M
        return float(sla.svdvals(dense)[0])
    try:
        s = spla.svds(M, k=1, which="LM", tol=tol.rel / 4, return_singular_vectors=False,
                      v0=np.ones(M.shape[1]), maxiter=20 * min(M.shape))
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceError("Lanczos for the norm did not converge", 20 * min(M.shape)) from exc
    return float(s[0])


def _hermitian_dense(H, name="matrix"):
    H = H.toarray() if sp.issparse(H) else np.asarray(H)
    _check_square(H)
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    if np.max(np.abs(H - H.conj().T), initial=0.0) > 1e-12 * scale:
        raise ValueError(f"{name} is not Hermitian")
    return H


def hermitian_min_eig(H, tol=None):
    """
    Smallest eigenvalue of a Hermitian matrix.

    Banded input (``BandedOperator``) is handled without densifying the
    eigenproblem.

    Raises
    ------
    ValueError
        If ``H`` is not Hermitian within 1e-12 (relative to its largest entry).
    """
    tol = tol or Tolerance()
    if isinstance(H, BandedOperator):
        for k, v in H.bands.items():
            partner = H.bands.get(-k, np.zeros_like(v))
            if np.max(np.abs(v - np.conj(partner)), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(v), initial=0.0)):
                raise ValueError("operator is not Hermitian")
        ab = _lower_bands(H)
        ab[0] = ab[0].real
        return float(sla.eig_banded(ab, lower=True, eigvals_only=True, select="i", select_range=(0, 0))[0])
    Hd = _hermitian_dense(H)
    return float(sla.eigh(Hd, eigvals_only=True, subset_by_index=[0, 0])[0])


def _lower_bands(op):
    """Lower band storage ``ab[k, i] = H[i + k, i]`` of a Hermitian ``BandedOperator``."""
    bw = max(abs(k) for k in op.bands)
    n = op.space.dim
    ab = np.zeros((bw + 1, n), dtype=np.result_type(*op.bands.values()))
    for k in range(bw + 1):
        if -k in op.bands:
            ab[k, : n - k] = op.bands[-k]
    return ab


def gram_bands(T):
    """``T^* T`` of a banded operator, as a Hermitian ``BandedOperator``."""
    Ts = T.tosparse("csr")
    G = (Ts.conj().T @ Ts).tocsr()
    bw = 2 * max(abs(k) for k in T.bands)
    bands = {}
    for k in range(-bw, bw + 1):
        v = G.diagonal(k)
        bands[k] = v.real if not np.iscomplexobj(v) or not np.any(v.imag) else v
    return BandedOperator(T.space, bands)


def _posdef(ab):
    try:
        sla.cholesky_banded(ab, lower=True, check_finite=False)
        return True
    except sla.LinAlgError:
        return False


def banded_pencil_min(K, S=None, tol=None):
    """
    Smallest eigenvalue of the Hermitian pencil ``K v = x S v`` with ``S``
    positive semidefinite (identity when omitted), i.e.
    ``inf_u (u^* K u) / (u^* S u)``.

    Bisection on ``x`` using banded Cholesky of ``K - x S`` as the
    positive-definiteness test; each step costs ``O(n)``.
    """
    tol = tol or Tolerance()
    n = K.space.dim
    k_ab = _lower_bands(K)
    if S is None:
        s_diag = np.ones(n)
        s_ab = np.ones((1, n))
    else:
        if S.space != K.space:
            raise ValueError("K and S live on different spaces")
        s_diag = S.bands[0].real
        s_ab = _lower_bands(S)
    rows = max(k_ab.shape[0], s_ab.shape[0])
    dtype = np.result_type(k_ab, s_ab)

    def shifted(x):
        ab = np.zeros((rows, n), dtype=dtype)
        ab[: k_ab.shape[0]] += k_ab
        ab[: s_ab.shape[0]] -= x * s_ab
        return ab

    pos = s_diag > 0
    if not np.any(pos):
        raise ValueError("S has no positive diagonal entry")
    # every Rayleigh quotient bounds the minimum from above
    hi = float(np.min(K.bands[0].real[pos] / s_diag[pos]))
    if _posdef(shifted(0.0)) and hi > 0:
        lo = 0.0
    else:
        step = max(abs(hi), 1.0)
        lo = hi - step
        while not _posdef(shifted(lo)):
            step *= 2
            lo = hi - step
            if step > 1e300:
                raise NumericalContractError("could not bracket the smallest eigenvalue")
    for _ in range(400):
        if hi - lo <= tol.rel * max(abs(hi), abs(lo)) or hi - lo <= 4 * np.finfo(float).eps * abs(hi):
            break
        mid = 0.5 * (lo + hi)
        if _posdef(shifted(mid)):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def hermitian_max_ratio(S, K, tol=None):
    """
    ``max_u (u^* S u) / (u^* K u)`` for Hermitian ``S`` and positive definite ``K``.

    This is the top eigenvalue of the pencil ``S v = nu K v``.
    """
    tol = tol or Tolerance()
    Sd = _hermitian_dense(S.todense() if isinstance(S, BandedOperator) else S, "S")
    Kd = _hermitian_dense(K.todense() if isinstance(K, BandedOperator) else K, "K")
    n = Sd.shape[0]
    try:
        return float(sla.eigh(Sd, Kd, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0])
    except sla.LinAlgError as exc:
        raise NumericalContractError("K is not positive definite") from exc


def propagator(L, t, tol=None, verify=True):
    """
    ``exp(t L)`` by scaling and squaring with Pade approximation.

    Parameters
    ----------
    L : BandedOperator or array_like
    t : float
        Nonnegative time.
    tol : Tolerance, optional
    verify : bool
        Compare with the square of the half-step propagator and raise if the
        two differ by more than ``tol.rel * ||exp(tL)||``.

    Raises
    ------
    NumericalContractError
        When the half-step check fails.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    tol = tol or Tolerance(1e-10)
    M = L.todense() if isinstance(L, BandedOperator) else np.asarray(L)
    _check_square(M)
    if t == 0:
        return np.eye(M.shape[0], dtype=np.result_type(M, float))
    E = sla.expm(t * M)
    if not np.all(np.isfinite(E)):
        raise NumericalContractError(f"exp(tL) overflowed at t={t}")
    if verify:
        H = sla.expm(0.5 * t * M)
        scale = np.linalg.norm(E, 2)
        err = np.linalg.norm(E - H @ H, 2)
        if err > tol.rel * max(scale, np.finfo(float).tiny):
            raise NumericalContractError(
                f"half-step check failed at t={t}: {err:.3e} > {tol.rel:.1e} * {scale:.3e}"
            )
    return E
