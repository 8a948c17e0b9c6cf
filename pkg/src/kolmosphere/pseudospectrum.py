"""
Resolvent norms along the imaginary axis, the pseudospectral bound, the
piecewise envelopes and the coercive estimates behind them.

Throughout, ``mu = lambda / (alpha m)`` and the resolvent is taken for the
generator restricted to the reduced space (the ``Y_2^m`` direction removed).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.optimize as so
import scipy.sparse as sp

from .numkernels import (
    NumericalContractError,
    Tolerance,
    banded_pencil_min,
    gram_bands,
    min_singular_value,
)
from .operators import (
    Kind,
    ModeSpace,
    assemble_A,
    assemble_L,
    assemble_Lambda,
    assemble_sin2_form,
    default_n_hi,
)

__all__ = [
    "CoercivityRecord",
    "EnvelopeParams",
    "GridSpec",
    "SweepResult",
    "TruncationError",
    "coercivity_scan",
    "envelope_F",
    "envelope_G",
    "fit_envelope_constant",
    "h1",
    "h2",
    "regime_xi",
    "resolvent_norm_at",
    "sweep",
]


class TruncationError(NumericalContractError):
    """Doubling ``n_hi`` did not settle a quantity."""

    def __init__(self, what, previous, current, n_hi):
        super().__init__(
            f"{what} not converged under truncation doubling at n_hi={n_hi}: "
            f"{previous!r} -> {current!r}"
        )
        self.previous = previous
        self.current = current
        self.n_hi = n_hi


@dataclass(frozen=True)
class EnvelopeParams:
    """``kappa`` sets the regime boundaries of ``h1``, ``h2``; must lie in (0, 1/2)."""

    kappa: float = 1.0 / 16.0

    def __post_init__(self):
        if not 0.0 < self.kappa < 0.5:
            raise ValueError("kappa must lie in (0, 1/2)")


@dataclass(frozen=True)
class GridSpec:
    """
    Sampling of ``mu`` for a sweep.

    The base grid is uniform on ``[-base_max, base_max]``; tails are
    geometric out to ``tail_max``; ``edge_points`` more are clustered within
    ``edge_width * |alpha|^{-1/2}`` of ``|mu| = 1`` where the envelope
    changes branch.
    """

    base_points: int = 501
    base_max: float = 1.25
    tail_points: int = 24
    tail_max: float = 8.0
    edge_points: int = 33
    edge_width: float = 4.0
    peak_rtol: float = 1e-3
    psi_rtol: float = 1e-6
    max_doublings: int = 4
    n_hi: int | None = None

    def __post_init__(self):
        if self.base_points < 3 or self.base_max <= 0 or self.tail_max < self.base_max:
            raise ValueError("invalid grid specification")
        if not 0 < self.peak_rtol < 1 or not 0 < self.psi_rtol < 1:
            raise ValueError("tolerances must lie in (0, 1)")

    def nonnegative_mu(self, alpha):
        base = np.linspace(-self.base_max, self.base_max, self.base_points)
        base = base[base >= 0]
        if 0.0 not in base:
            base = np.concatenate([[0.0], base])
        tail = np.geomspace(self.base_max, self.tail_max, self.tail_points + 1)[1:]
        w = self.edge_width / math.sqrt(abs(alpha))
        edge = np.linspace(max(0.0, 1.0 - w), 1.0 + w, self.edge_points) if self.edge_points else []
        return np.unique(np.concatenate([base, tail, edge]))


@dataclass
class SweepResult:
    alpha: float
    m: int
    mu_grid: np.ndarray
    norms: np.ndarray
    mu_peak: float
    norm_peak: float
    psi: float
    n_hi_used: int
    converged: bool
    psi_history: list = field(default_factory=list)

    @property
    def lam_grid(self):
        return self.mu_grid * self.alpha * self.m

    def summary(self):
        return {
            "alpha": self.alpha,
            "m": self.m,
            "psi": self.psi,
            "mu_peak": self.mu_peak,
            "norm_peak": self.norm_peak,
            "n_hi_used": self.n_hi_used,
            "converged": self.converged,
        }


def _reduced_L(alpha, m, n_hi):
    space = ModeSpace(m, n_hi, Kind.REDUCED)
    return assemble_L(space, alpha).tosparse("csc")


def _norm_from_L(Ls, lam, tol):
    n = Ls.shape[0]
    T = (1j * lam) * sp.identity(n, dtype=complex, format="csc") - Ls
    s = min_singular_value(T, tol)
    if s <= 0:
        raise NumericalContractError(f"i*{lam} lies in the computed spectrum")
    return 1.0 / s


def resolvent_norm_at(alpha, m, lam, n_hi=None, tol=None):
    """
    ``||(i lam - L)^{-1}||`` on the reduced space at truncation ``n_hi``.

    >>> round(resolvent_norm_at(0.0, 1, 24.0, 64), 12) == round(1 / 26, 12)
    True
    """
    if m == 0:
        raise ValueError("m must be nonzero")
    n_hi = n_hi or default_n_hi(alpha, m)
    return _norm_from_L(_reduced_L(alpha, m, n_hi), float(lam), tol or Tolerance())


def _sweep_once(alpha, m, n_hi, spec, tol):
    am = alpha * m
    Ls = _reduced_L(alpha, m, n_hi)

    def norm(mu):
        return _norm_from_L(Ls, mu * am, tol)

    mu = spec.nonnegative_mu(alpha)
    vals = np.array([norm(x) for x in mu])
    extra_mu, extra_val = [], []
    for i in range(len(mu)):
        left = vals[i - 1] if i > 0 else vals[1]  # even in mu
        right = vals[i + 1] if i + 1 < len(mu) else -np.inf
        if vals[i] >= left and vals[i] >= right:
            lo = mu[i - 1] if i > 0 else 0.0
            hi = mu[i + 1] if i + 1 < len(mu) else mu[i]
            if hi <= lo:
                continue
            res = so.minimize_scalar(
                lambda x: -norm(x),
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": 1e-3 * spec.peak_rtol * max(hi - lo, 1e-12) + 1e-12},
            )
            if -res.fun > vals[i]:
                extra_mu.append(float(res.x))
                extra_val.append(float(-res.fun))
    mu_all = np.concatenate([mu, extra_mu])
    val_all = np.concatenate([vals, extra_val])
    order = np.argsort(mu_all, kind="stable")
    mu_all, val_all = mu_all[order], val_all[order]
    keep = np.concatenate([[True], np.diff(mu_all) > 0])
    mu_all, val_all = mu_all[keep], val_all[keep]
    # mirror to negative mu, the norm is even in mu
    pos = mu_all > 0
    mu_full = np.concatenate([-mu_all[pos][::-1], mu_all])
    val_full = np.concatenate([val_all[pos][::-1], val_all])
    k = int(np.argmax(val_all))
    return mu_full, val_full, float(mu_all[k]), float(val_all[k])


def sweep(alpha, m, grid_spec=None, tol=None, strict=False):
    """
    Sample the resolvent norm over ``mu`` and extract the pseudospectral bound.

    Local maxima on the grid are refined with bounded Brent search; the
    truncation is doubled until ``psi`` moves by less than
    ``grid_spec.psi_rtol``.

    Parameters
    ----------
    alpha : float
        Nonzero advection strength.
    m : int
        Nonzero azimuthal order.
    grid_spec : GridSpec, optional
    tol : Tolerance, optional
    strict : bool
        Raise :class:`TruncationError` instead of returning an unconverged result.

    Returns
    -------
    SweepResult
    """
    if alpha == 0 or m == 0:
        raise ValueError("alpha and m must be nonzero")
    spec = grid_spec or GridSpec()
    tol = tol or Tolerance()
    a, mm = abs(float(alpha)), abs(int(m))
    n_hi = spec.n_hi or default_n_hi(a, mm)
    history = []
    prev = None
    converged = False
    for _ in range(spec.max_doublings + 1):
        mu, vals, mu_pk, nrm_pk = _sweep_once(a, mm, n_hi, spec, tol)
        psi = 1.0 / nrm_pk
        history.append((n_hi, psi))
        if prev is not None and abs(psi - prev[1]) <= spec.psi_rtol * abs(psi):
            converged = True
            break
        prev = (n_hi, psi)
        n_hi *= 2
    if not converged and strict:
        raise TruncationError("psi", prev[1], psi, n_hi)
    return SweepResult(
        alpha=float(alpha),
        m=int(m),
        mu_grid=mu,
        norms=vals,
        mu_peak=mu_pk,
        norm_peak=nrm_pk,
        psi=psi,
        n_hi_used=n_hi,
        converged=converged,
        psi_history=history,
    )


def envelope_G(alpha, m, mu, params=None):
    """
    Three-branch resolvent envelope.

    ``|alpha m|^{-1} (|mu| - 1)^{-1}`` above ``1 + |alpha|^{-1/2}``,
    ``|alpha|^{-1/2} |m|^{-1}`` in the band around ``|mu| = 1`` and
    ``|alpha m|^{-2/3} (1 - |mu|)^{-1/3}`` below ``1 - |alpha|^{-1/2}``.
    """
    if alpha == 0 or m == 0:
        raise ValueError("alpha and m must be nonzero")
    a, am = abs(alpha), abs(alpha * m)
    x = np.abs(np.asarray(mu, dtype=float))
    w = a**-0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(
            x > 1 + w,
            1.0 / (am * (x - 1)),
            np.where(x > 1 - w, w / abs(m), am ** (-2.0 / 3.0) * (1 - x) ** (-1.0 / 3.0)),
        )
    return float(out) if out.ndim == 0 else out


def h1(xi, mu, m, params=None):
    """First auxiliary envelope; vanishes for ``|mu| > 1 + kappa / xi``."""
    k = (params or EnvelopeParams()).kappa
    x = abs(mu)
    if x > 1 + k / xi:
        return 0.0
    if x > 1 - k / xi:
        return abs(m) ** -0.5 * xi**-0.5
    return (1 - x) ** -0.5 / xi


def h2(xi, mu, m, params=None):
    """Second auxiliary envelope; vanishes for ``|mu| > 1 + kappa / xi^2``."""
    k = (params or EnvelopeParams()).kappa
    x = abs(mu)
    if x > 1 + k / xi**2:
        return 0.0
    if x > 1 - k / xi**2:
        return abs(m) ** -0.5 * xi**-2
    return (1 - x) ** 0.5 / xi


def regime_xi(alpha, m, mu, params=None):
    """
    The regime-wise choice of ``(xi1, xi2)`` used in the closed-form envelope.
    """
    k = (params or EnvelopeParams()).kappa
    a, am, x = abs(alpha), abs(alpha * m), abs(mu)
    w = a**-0.5
    if x > 1 + w:
        x1 = 2 * k / (x - 1)
        return x1, math.sqrt(x1)
    if x > 1 - w:
        x1 = k * math.sqrt(a) / 2
        return x1, math.sqrt(x1)
    return am ** (1 / 3) * (1 - x) ** (-1 / 3), am ** (1 / 3) * (1 - x) ** (1 / 6)


def _F_objective(xi1, xi2, alpha, m, mu, params):
    am = abs(alpha * m)
    return (
        xi1 / am
        + (xi1 * xi2) ** 2 / am**2
        + xi1**2 * h2(xi2, mu, m, params) / am
        + h1(xi1, mu, m, params) ** 2
    )


def envelope_F(alpha, mu, m, params=None, grid_points=61):
    """
    Abstract envelope: infimum over ``xi1, xi2 > 0`` of the four-term objective.

    Returns
    -------
    closed : float
        Objective at :func:`regime_xi`.
    numeric : float
        Infimum over a log grid (which contains the regime choice) followed by
        a Nelder-Mead polish in log coordinates; never above ``closed``.
    """
    if alpha == 0:
        raise ValueError("alpha must be nonzero")
    params = params or EnvelopeParams()
    x1c, x2c = regime_xi(alpha, m, mu, params)
    closed = _F_objective(x1c, x2c, alpha, m, mu, params)
    am = abs(alpha * m)
    # span well beyond where any term can win
    lo, hi = -4.0, math.log10(am) + 4.0
    g1 = np.concatenate([np.logspace(lo, hi, grid_points), [x1c]])
    g2 = np.concatenate([np.logspace(lo, hi, grid_points), [x2c]])
    best, arg = closed, (x1c, x2c)
    for u in g1:
        for v in g2:
            f = _F_objective(u, v, alpha, m, mu, params)
            if f < best:
                best, arg = f, (u, v)
    res = so.minimize(
        lambda p: _F_objective(10 ** p[0], 10 ** p[1], alpha, m, mu, params),
        x0=np.log10(arg),
        method="Nelder-Mead",
        options={"xatol": 1e-6, "fatol": 1e-14 * best, "maxiter": 400},
    )
    numeric = min(best, float(res.fun))
    return closed, numeric


def fit_envelope_constant(result: SweepResult, params=None):
    """``max_i norms[i] / G(alpha, m, mu[i])`` over the sweep grid."""
    g = envelope_G(result.alpha, result.m, result.mu_grid, params)
    return float(np.max(result.norms / g))


@dataclass
class CoercivityRecord:
    m: int
    mu: float
    s_min: float
    ratio_high: float
    c_combined: float
    c_b3: float
    xi1: float
    xi2: float
    n_hi_used: int
    converged: bool

    def as_dict(self):
        return asdict(self)


def _coercivity_at(m, mu, n_hi, xi1, xi2, params, tol):
    space = ModeSpace(m, n_hi, Kind.REDUCED)
    G = gram_bands(assemble_Lambda(space).shifted(mu))
    D = assemble_A(space) * -1.0
    s = float(np.sqrt(max(banded_pencil_min(G, None, tol), 0.0)))
    ratio = s / (abs(mu) - 1) if abs(mu) > 1 else float("nan")
    a1 = h1(xi1, mu, m, params)
    a2 = h2(xi2, mu, m, params)
    c_comb = banded_pencil_min(G * xi1**2 + D * a1**2, None, tol)
    c_b3 = banded_pencil_min(G * xi2**2 + D * a2**2, assemble_sin2_form(space), tol)
    return s, ratio, c_comb, c_b3


def coercivity_scan(m, mu_list, n_hi=None, params=None, alpha=1e4, rtol=1e-6, max_n_hi=1 << 17, tol=None,
                    strict=False):
    """
    Coercive constants of ``mu - Lambda`` on the reduced space.

    For each ``mu`` the record holds

    * ``s_min``: smallest singular value of ``mu - Lambda``;
    * ``ratio_high``: ``s_min / (|mu| - 1)`` when ``|mu| > 1`` (else NaN);
    * ``c_combined``: smallest eigenvalue of ``xi1^2 T^*T + h1^2 D``;
    * ``c_b3``: smallest value of ``(xi2^2 ||Tu||^2 + h2^2 u^*Du) / ||sin(theta) u||^2``,

    with ``T = mu - Lambda``, ``D = diag(lambda_n - 2)`` and ``xi`` from
    :func:`regime_xi` at the given ``alpha``.  The truncation is doubled
    from ``n_hi`` until ``ratio_high``, ``c_combined`` and ``c_b3`` all move
    by less than ``rtol``.
    """
    if m == 0:
        raise ValueError("m must be nonzero")
    params = params or EnvelopeParams()
    tol = tol or Tolerance()
    out = []
    for mu in mu_list:
        mu = float(mu)
        xi1, xi2 = regime_xi(alpha, m, mu, params)
        nh = max(n_hi or 64, max(3, abs(m)) + 8)
        prev = None
        converged = False
        while True:
            cur = _coercivity_at(m, mu, nh, xi1, xi2, params, tol)
            if prev is not None:
                change = max(
                    abs(c - p) / abs(c) for c, p in zip(cur[1:], prev[1:]) if np.isfinite(c)
                )
                if change < rtol:
                    converged = True
                    break
            if 2 * nh > max_n_hi:
                break
            prev = cur
            nh *= 2
        if not converged and strict:
            raise TruncationError(f"coercivity at mu={mu}", prev, cur, nh)
        s, ratio, c_comb, c_b3 = cur
        out.append(CoercivityRecord(int(m), mu, s, ratio, c_comb, c_b3, xi1, xi2, nh, converged))
    return out
