"""
Propagator norms of ``exp(t L)``, certified exponential decay rates,
scaling studies in ``alpha`` and ``m``, and the transient carried by the
``Y_2^m`` direction.

Norms are split with the projections ``Q`` (reduced space) and ``P``
(the ``Y_2^m`` line, present only for ``|m| <= 2``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
import scipy.linalg as sla
from scipy import stats

from .numkernels import Tolerance, propagator, seeded_rng
from .operators import Kind, ModeSpace, assemble_L, assemble_Lambda
from .parallel import pmap
from .pseudospectrum import GridSpec, TruncationError, sweep

__all__ = [
    "DecayEstimate",
    "PropagatorCurve",
    "TSpec",
    "curve_n_hi",
    "decay_rate",
    "propagator_curve",
    "resolvent_identity_check",
    "scaling_study",
    "transient_study",
]

# propagator entries below this are dominated by rounding and are not gated
NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class TSpec:
    """
    Log-spaced time grid from ``t_min = t_min_factor / sigma_guess`` to the
    time where ``||Q e^{tL} Q||`` reaches ``target``.
    """

    points: int = 40
    t_min_factor: float = 0.01
    target: float = 1e-8
    rtol: float = 1e-6
    max_doublings: int = 4
    n_hi: int | None = None
    n_hi_factor: float = 4.0
    verify: bool = True

    def __post_init__(self):
        if self.points < 2 or not 0 < self.target < 1 or self.t_min_factor <= 0:
            raise ValueError("invalid time grid specification")


def curve_n_hi(alpha, m, factor=4.0):
    """Starting truncation for propagator curves, ``max(64, n_lo + ceil(factor |alpha m|^{1/3}))``."""
    n_lo = max(2, abs(m))
    return max(64, n_lo + int(math.ceil(factor * abs(alpha * m) ** (1.0 / 3.0))))


@dataclass
class PropagatorCurve:
    alpha: float
    m: int
    t_grid: np.ndarray
    qq_norms: np.ndarray
    pq_norms: np.ndarray
    pp_check: float
    pp_residuals: np.ndarray = None
    n_hi_used: int = 0
    converged: bool = True
    sigma_guess: float = float("nan")


@dataclass
class DecayEstimate:
    sigma: float
    c_cap: float
    achieved_prefactor: float
    t_range: tuple
    valid: bool = True
    note: str = field(default="certificate checked on the finite t grid only")

    def holds_on(self, curve, slack=1e-12):
        """Re-check ``qq <= c_cap exp(-sigma t)`` on every grid point."""
        bound = self.c_cap * np.exp(-self.sigma * curve.t_grid)
        return bool(np.all(curve.qq_norms <= bound * (1 + slack)))


def _split_norms(E, has_p):
    if not has_p:
        return sla.svdvals(E)[0], 0.0, 0.0
    qq = sla.svdvals(E[1:, 1:])[0]
    pq = float(np.linalg.norm(E[0, 1:]))
    return qq, pq, abs(E[0, 0])


def _curve_values(alpha, m, n_hi, t_grid, tol, verify):
    space = ModeSpace(m, n_hi, Kind.FULL)
    L = assemble_L(space, alpha).todense()
    has_p = abs(m) <= 2
    qq, pq, pp = [], [], []
    check_at = {0, len(t_grid) // 2, len(t_grid) - 1} if verify else set()
    for i, t in enumerate(t_grid):
        E = propagator(L, float(t), tol, verify=i in check_at)
        a, b, c = _split_norms(E, has_p)
        qq.append(a)
        pq.append(b)
        pp.append(abs(c - math.exp(-4.0 * t)) if has_p else 0.0)
    return np.array(qq), np.array(pq), np.array(pp)


def _qq_at(L, t, has_p):
    E = sla.expm(t * L)
    return _split_norms(E, has_p)[0]


def _pick_t_grid(alpha, m, sigma_guess, spec, n_hi):
    t_min = spec.t_min_factor / sigma_guess
    space = ModeSpace(m, n_hi, Kind.FULL)
    L = assemble_L(space, alpha).todense()
    has_p = abs(m) <= 2
    log_target = math.log(spec.target)
    t = -log_target / sigma_guess
    # secant-style correction assuming roughly exponential decay
    for _ in range(8):
        q = _qq_at(L, t, has_p)
        if q <= 0 or not np.isfinite(q):
            t *= 0.5
            continue
        r = math.log(q) / log_target
        if abs(r - 1) < 0.1:
            break
        t = t / max(r, 0.05) if r > 0 else 2 * t
    t_max = max(t, 10 * t_min)
    return np.geomspace(t_min, t_max, spec.points)


def _estimate_psi(alpha, m):
    if alpha == 0:
        # diagonal generator: least damped reduced degree n = max(3, |m|)
        n = max(3, abs(m))
        return n * (n + 1.0) - 2.0
    coarse = GridSpec(base_points=101, tail_points=8, edge_points=9, max_doublings=0)
    return sweep(alpha, m, coarse).psi


def propagator_curve(alpha, m, t_spec=None, n_hi=None, t_grid=None, psi=None, tol=None, strict=False):
    """
    ``||Q e^{tL} Q||``, ``||P e^{tL} Q||`` and the ``P e^{tL} P`` check on a time grid.

    Parameters
    ----------
    alpha : float
    m : int
        Nonzero azimuthal order.
    t_spec : TSpec, optional
        Grid and truncation policy.
    n_hi : int, optional
        Starting truncation, overrides ``t_spec.n_hi``.
    t_grid : array_like, optional
        Explicit positive times; skips the automatic grid.
    psi : float, optional
        Pseudospectral bound used for ``sigma_guess = max(10, psi / 2)``;
        estimated from a coarse sweep when omitted.

    Notes
    -----
    The truncation is doubled until every norm above ``1e-12`` changes by
    less than ``t_spec.rtol`` relative.
    """
    if m == 0:
        raise ValueError("m must be nonzero")
    spec = t_spec or TSpec()
    tol = tol or Tolerance(1e-10)
    a, mm = abs(float(alpha)), abs(int(m))
    nh = n_hi or spec.n_hi or curve_n_hi(a, mm, spec.n_hi_factor)
    if t_grid is None:
        if psi is None:
            psi = _estimate_psi(a, mm)
        sigma_guess = max(10.0, 0.5 * psi)
        t_grid = _pick_t_grid(a, mm, sigma_guess, spec, nh)
    else:
        sigma_guess = float("nan")
        t_grid = np.asarray(t_grid, dtype=float)
        if np.any(t_grid <= 0):
            raise ValueError("times must be positive")
    prev = None
    converged = False
    for _ in range(spec.max_doublings + 1):
        cur = _curve_values(a, mm, nh, t_grid, tol, spec.verify)
        if prev is not None:
            change = 0.0
            for new, old in ((cur[0], prev[0]), (cur[1], prev[1])):
                big = (np.abs(new) > NORM_FLOOR) | (np.abs(old) > NORM_FLOOR)
                if np.any(big):
                    change = max(change, float(np.max(np.abs(new[big] - old[big]) / np.abs(new[big]))))
            if change < spec.rtol:
                converged = True
                break
        prev = cur
        nh *= 2
    if not converged and strict:
        raise TruncationError("propagator curve", prev[0].tolist(), cur[0].tolist(), nh)
    qq, pq, pp = cur
    return PropagatorCurve(float(alpha), int(m), t_grid, qq, pq, float(np.max(pp)), pp, nh, converged, sigma_guess)


def decay_rate(curve: PropagatorCurve, c_cap=10.0) -> DecayEstimate:
    """
    Largest ``sigma`` with ``qq(t) <= c_cap exp(-sigma t)`` on the whole grid.

    Returns ``sigma = 0`` with ``valid=False`` when some ``qq >= c_cap``.
    """
    if c_cap <= 0:
        raise ValueError("c_cap must be positive")
    t = curve.t_grid
    q = curve.qq_norms
    t_range = (float(t[0]), float(t[-1]))
    if np.any(q >= c_cap):
        return DecayEstimate(0.0, c_cap, float(np.max(q)), t_range, valid=False,
                             note="some norm reaches c_cap")
    with np.errstate(divide="ignore"):
        rates = (math.log(c_cap) - np.log(q)) / t
    sigma = float(np.min(rates))
    achieved = float(np.max(q * np.exp(sigma * t)))
    return DecayEstimate(sigma, c_cap, achieved, t_range)


def _fit(x, y):
    res = stats.linregress(np.log(x), np.log(y))
    dof = len(x) - 2
    half = stats.t.ppf(0.975, dof) * res.stderr if dof > 0 else float("nan")
    return {"slope": float(res.slope), "intercept": float(res.intercept),
            "ci95": [float(res.slope - half), float(res.slope + half)]}


def _study_point(job, t_spec=None, grid_spec=None, c_cap=10.0):
    alpha, m, with_decay = job
    sw = sweep(alpha, m, grid_spec)
    row = {"alpha": float(alpha), "m": int(m), "psi": sw.psi, "mu_peak": sw.mu_peak,
           "n_hi_sweep": sw.n_hi_used, "sweep_converged": sw.converged}
    curve = None
    if with_decay:
        curve = propagator_curve(alpha, m, t_spec, psi=sw.psi)
        est = decay_rate(curve, c_cap)
        row.update(sigma=est.sigma, sigma_over_psi=est.sigma / sw.psi, n_hi_curve=curve.n_hi_used,
                   curve_converged=curve.converged, achieved_prefactor=est.achieved_prefactor,
                   certificate_valid=est.valid)
    return row, curve


def scaling_study(alpha_list, m_list, m_fixed=1, alpha_fixed=1e4, decay_alpha_max=1e4, c_cap=10.0,
                  t_spec=None, grid_spec=None, workers=None, return_curves=False):
    """
    Pseudospectral bound and certified decay rate across ``alpha`` and ``m``.

    ``psi`` and ``sigma`` are computed on ``alpha_list x {m_fixed}`` and
    ``{alpha_fixed} x m_list``; the decay rate only for
    ``|alpha| <= decay_alpha_max``.  Log-log slopes come with 95% intervals.

    Returns
    -------
    dict
        ``rows`` (one per point), ``slopes`` and ``link`` summaries.
    """
    alpha_list = [float(a) for a in alpha_list]
    m_list = [int(m) for m in m_list]
    if len(alpha_list) < 2 or len(m_list) < 2:
        raise ValueError("need at least two alphas and two m values")
    if any(a == 0 for a in alpha_list) or any(m == 0 for m in m_list):
        raise ValueError("alpha and m must be nonzero")
    points = [(a, m_fixed) for a in alpha_list]
    points += [(alpha_fixed, m) for m in m_list if (alpha_fixed, m) not in points]
    jobs = [(a, m, abs(a) <= decay_alpha_max) for a, m in points]
    out = pmap(partial(_study_point, t_spec=t_spec, grid_spec=grid_spec, c_cap=c_cap), jobs, workers)
    rows = [r for r, _ in out]
    by = {(r["alpha"], r["m"]): r for r in rows}
    a_rows = [by[(a, m_fixed)] for a in alpha_list]
    m_rows = [by[(alpha_fixed, m)] for m in m_list]
    slopes = {
        "psi_vs_alpha": _fit([abs(r["alpha"]) for r in a_rows], [r["psi"] for r in a_rows]),
        "psi_vs_m": _fit([abs(r["m"]) for r in m_rows], [r["psi"] for r in m_rows]),
    }
    a_dec = [r for r in a_rows if "sigma" in r]
    m_dec = [r for r in m_rows if "sigma" in r]
    if len(a_dec) >= 2:
        slopes["sigma_vs_alpha"] = _fit([abs(r["alpha"]) for r in a_dec], [r["sigma"] for r in a_dec])
    if len(m_dec) >= 2:
        slopes["sigma_vs_m"] = _fit([abs(r["m"]) for r in m_dec], [r["sigma"] for r in m_dec])
    normalised = [r["psi"] / (abs(r["alpha"]) ** 0.5 * abs(r["m"]) ** (2 / 3)) for r in rows]
    links = [r["sigma_over_psi"] for r in rows if "sigma_over_psi" in r]
    link = {
        "psi_normalised_min": min(normalised),
        "psi_normalised_spread": max(normalised) / min(normalised),
    }
    if links:
        link.update(sigma_over_psi_min=min(links), sigma_over_psi_spread=max(links) / min(links))
    res = {"rows": rows, "slopes": slopes, "link": link}
    if return_curves:
        res["curves"] = [c for _, c in out if c is not None]
    return res


def _transient_point(job, t_spec=None):
    alpha, m = job
    curve = propagator_curve(alpha, m, t_spec)
    amp = curve.pq_norms * np.exp(2.0 * curve.t_grid)
    k = int(np.argmax(amp))
    return {
        "alpha": float(alpha), "m": int(m), "amplitude": float(amp[k]), "t_peak": float(curve.t_grid[k]),
        "pp_check": curve.pp_check, "n_hi_curve": curve.n_hi_used, "curve_converged": curve.converged,
        "envelope": abs(alpha * m) ** (1 / 3) * math.log(abs(alpha * m) ** (2 / 3)),
    }, curve


def transient_study(alpha_list, m=1, t_spec=None, workers=None, return_curves=False):
    """
    Peak over ``t`` of ``||P e^{tL} Q|| e^{2t}`` for each ``alpha`` and its log-log slope.
    """
    if abs(m) not in (1, 2):
        raise ValueError("the transient only exists for |m| in {1, 2}")
    alpha_list = [float(a) for a in alpha_list]
    if any(abs(a) <= 4 for a in alpha_list):
        raise ValueError("alpha values must exceed 4 in magnitude")
    out = pmap(partial(_transient_point, t_spec=t_spec), [(a, m) for a in alpha_list], workers)
    rows = [r for r, _ in out]
    res = {"rows": rows}
    if len(rows) >= 2:
        res["slope"] = _fit([abs(r["alpha"]) for r in rows], [r["amplitude"] for r in rows])
    if return_curves:
        res["curves"] = [c for _, c in out]
    return res


def resolvent_identity_check(alpha, m, zeta, trials=20, n_hi=None, seed=None):
    """
    Maximum relative residual of the ``Q``/``P`` splitting of ``(zeta - L)^{-1}``.

    Checks ``Q (zeta - L)^{-1} f = (zeta - QL)^{-1} Q f`` and
    ``P (zeta - L)^{-1} f = P f / (zeta + 4) - i alpha m (zeta + 4)^{-1} P Lambda (zeta - QL)^{-1} Q f``
    on seeded random ``f``.
    """
    zeta = complex(zeta)
    if zeta == -4:
        raise ValueError("zeta = -4 is an eigenvalue of the P part")
    if zeta.real < 0:
        raise ValueError("zeta must satisfy Re(zeta) >= 0")
    if m == 0:
        raise ValueError("m must be nonzero")
    space = ModeSpace(m, n_hi or max(64, max(2, abs(m)) + 16), Kind.FULL)
    L = assemble_L(space, alpha).todense()
    lam = assemble_Lambda(space).todense()
    n = space.dim
    has_p = abs(m) <= 2
    k = 1 if has_p else 0
    rng = seeded_rng(seed)
    R = zeta * np.eye(n) - L
    RQ = R[k:, k:]
    worst = 0.0
    for _ in range(trials):
        f = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        u = sla.solve(R, f)
        v = sla.solve(RQ, f[k:])
        worst = max(worst, np.linalg.norm(u[k:] - v) / np.linalg.norm(u[k:]))
        if has_p:
            p = f[0] / (zeta + 4) - 1j * alpha * m / (zeta + 4) * (lam[0, 1:] @ v)
            worst = max(worst, abs(u[0] - p) / max(abs(u[0]), np.finfo(float).tiny))
    return float(worst)
