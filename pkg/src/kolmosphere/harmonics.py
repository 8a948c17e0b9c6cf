"""
Spherical-harmonic basis data for the per-mode spectral discretisation.

Conventions
-----------
Profiles are fully orthonormal with the Condon-Shortley phase, so that
``Y_n^m(theta, phi) = Pbar_n^m(theta) * exp(i m phi)`` and

    2 pi * int_0^pi Pbar_n^m(theta) Pbar_k^m(theta) sin(theta) dtheta = delta_nk.

Negative orders follow ``Pbar_n^{-m} = (-1)^m Pbar_n^m``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_legendre

__all__ = [
    "QuadratureRule",
    "basis_table",
    "coupling",
    "eval_basis",
    "eval_basis_dtheta",
    "gauss_legendre",
    "laplace_eigenvalue",
]

# rescale the running recurrence whenever magnitudes leave this window
_BIG = 1e150
_LOG_BIG = np.log(_BIG)


def laplace_eigenvalue(n):
    """Eigenvalue ``n (n + 1)`` of ``-Delta`` on degree-``n`` harmonics."""
    n = np.asarray(n)
    if np.any(n < 0):
        raise ValueError("degree must be nonnegative")
    out = n * (n + 1.0)
    return float(out) if out.ndim == 0 else out


def coupling(n, m):
    """
    Coefficient ``a_n^m`` of the three-term relation
    ``cos(theta) Y_n^m = a_n^m Y_{n-1}^m + a_{n+1}^m Y_{n+1}^m``.

    Parameters
    ----------
    n : int or array_like of int
        Degree(s), ``n >= |m|``.
    m : int
        Order.

    Returns
    -------
    float or ndarray
        ``sqrt((n - m)(n + m) / ((2n - 1)(2n + 1)))``; zero when ``n == |m|``.
    """
    n_arr = np.asarray(n, dtype=float)
    m = abs(int(m))
    if np.any(n_arr < m):
        raise ValueError(f"coupling needs n >= |m| (got n={n}, m={m})")
    num = (n_arr - m) * (n_arr + m)
    den = (2.0 * n_arr - 1.0) * (2.0 * n_arr + 1.0)
    # n = m = 0 gives 0/-1; the (n - m) factor makes it vanish anyway
    out = np.sqrt(np.where(num > 0, num / np.where(den == 0, 1.0, den), 0.0))
    return float(out) if out.ndim == 0 else out


def _check_theta(theta):
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0) or np.any(theta > np.pi) or np.any(~np.isfinite(theta)):
        raise ValueError("colatitude must lie in [0, pi]")
    return theta


def _sector_log(m, sin_t):
    """log|Pbar_m^m| and its sign, without forming sin(theta)**m."""
    k = np.arange(1, m + 1)
    log_c = -0.5 * np.log(4 * np.pi) + 0.5 * np.sum(np.log((2 * k + 1) / (2.0 * k)))
    with np.errstate(divide="ignore"):
        log_s = np.log(sin_t)
    sign = -1.0 if m % 2 else 1.0
    if m == 0:
        return np.full(sin_t.shape, log_c), sign
    return log_c + m * log_s, sign


def basis_table(m, n_max, theta):
    """
    Evaluate ``Pbar_n^m(theta)`` for every ``n = |m|, ..., n_max``.

    The recurrence runs upward in ``n`` from the sectoral value with an
    exponent carried separately per point, so degrees well beyond 10^4 do
    not overflow or underflow prematurely.

    Returns
    -------
    ndarray, shape (n_max - |m| + 1, len(theta))
        Row ``k`` holds degree ``|m| + k``.
    """
    theta = np.atleast_1d(_check_theta(theta))
    ma = abs(int(m))
    if n_max < ma:
        raise ValueError(f"n_max={n_max} below |m|={ma}")
    cos_t = np.cos(theta)
    sin_t = np.sin(theta)
    if ma > 0:
        # exact zeros at the poles
        sin_t = np.where((theta == 0) | (theta == np.pi), 0.0, sin_t)
    log_scale, sign = _sector_log(ma, sin_t)
    zero = ~np.isfinite(log_scale)
    log_scale = np.where(zero, 0.0, log_scale)

    rows = n_max - ma + 1
    out = np.empty((rows, theta.size))
    p_prev = np.zeros(theta.size)
    p_cur = np.full(theta.size, sign)
    out[0] = p_cur * np.exp(log_scale)
    a = coupling(np.arange(ma, n_max + 2), ma)
    for k in range(1, rows):
        p_next = (cos_t * p_cur - a[k - 1] * p_prev) / a[k]
        p_prev, p_cur = p_cur, p_next
        big = np.abs(p_cur) > _BIG
        if np.any(big):
            p_cur = np.where(big, p_cur / _BIG, p_cur)
            p_prev = np.where(big, p_prev / _BIG, p_prev)
            log_scale = log_scale + big * _LOG_BIG
        with np.errstate(over="ignore", under="ignore"):
            out[k] = p_cur * np.exp(log_scale)
    out[:, zero] = 0.0
    if m < 0 and ma % 2:
        out = -out
    return out


def eval_basis(n, m, theta):
    """
    Fully normalised profile ``Pbar_n^m(theta)``.

    >>> round(float(eval_basis(0, 0, 1.0)), 7)
    0.2820948
    """
    if abs(m) > n:
        raise ValueError(f"|m|={abs(m)} exceeds degree n={n}")
    theta_arr = _check_theta(theta)
    vals = basis_table(m, n, np.atleast_1d(theta_arr))[-1]
    return float(vals[0]) if theta_arr.ndim == 0 else vals.reshape(theta_arr.shape)


def eval_basis_dtheta(n, m, theta):
    """
    ``d/dtheta`` of ``Pbar_n^m``.

    Uses the order-ladder form

        dPbar_n^m/dtheta = (sqrt((n - m)(n + m + 1)) Pbar_n^{m+1}
                            - sqrt((n + m)(n - m + 1)) Pbar_n^{m-1}) / 2,

    which is regular at the poles and therefore yields the analytic limit
    there without special casing.
    """
    if abs(m) > n:
        raise ValueError(f"|m|={abs(m)} exceeds degree n={n}")
    theta_arr = _check_theta(theta)
    th = np.atleast_1d(theta_arr)
    if n == 0:
        out = np.zeros(th.shape)
    else:
        up = np.sqrt(float((n - m) * (n + m + 1)))
        dn = np.sqrt(float((n + m) * (n - m + 1)))
        p_up = eval_basis(n, m + 1, th) if abs(m + 1) <= n else 0.0
        p_dn = eval_basis(n, m - 1, th) if abs(m - 1) <= n else 0.0
        out = 0.5 * (up * p_up - dn * p_dn)
        out = np.broadcast_to(out, th.shape).astype(float)
    return float(out[0]) if theta_arr.ndim == 0 else out.reshape(theta_arr.shape)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre nodes (values of cos(theta)) and weights on [-1, 1]."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape:
            raise ValueError("nodes and weights differ in length")
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    def __len__(self):
        return self.nodes.size

    @property
    def theta(self):
        """Colatitudes of the nodes, decreasing."""
        return np.arccos(self.nodes)

    def integrate(self, values):
        """Sum of ``weights * values`` along the last axis."""
        return np.asarray(values) @ self.weights


def gauss_legendre(npts):
    """``npts``-point Gauss-Legendre rule on [-1, 1]."""
    npts = int(npts)
    if npts < 1:
        raise ValueError("npts must be positive")
    x, w = roots_legendre(npts)
    return QuadratureRule(nodes=np.array(x), weights=np.array(w))
