import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from kolmosphere.numkernels import NumericalContractError
from kolmosphere.pseudospectrum import (
    EnvelopeParams,
    GridSpec,
    TruncationError,
    coercivity_scan,
    envelope_F,
    envelope_G,
    fit_envelope_constant,
    h1,
    h2,
    regime_xi,
    resolvent_norm_at,
    sweep,
)

# frozen oracle values (converged under truncation doubling)
PSI_ORACLE = {(10.0, 1): 10.26634896148273, (1e2, 1): 18.67707463141571, (1e3, 1): 70.50278745599013}

COARSE = GridSpec(base_points=101, tail_points=8, edge_points=9)


# -- resolvent norm ---------------------------------------------------------------


def test_resolvent_alpha_zero_closed_forms():
    assert_allclose(resolvent_norm_at(0.0, 1, 0.0, 64), 1 / 10, rtol=1e-12)
    assert_allclose(resolvent_norm_at(0.0, 1, 24.0, 64), 1 / 26, rtol=1e-12)


@given(st.floats(-5e3, 5e3, allow_nan=False), st.integers(1, 6))
@settings(max_examples=25, deadline=None)
def test_resolvent_even_in_lambda_and_m(lam, m):
    base = resolvent_norm_at(300.0, m, lam, 120)
    assert_allclose(resolvent_norm_at(300.0, m, -lam, 120), base, rtol=1e-10)
    assert_allclose(resolvent_norm_at(300.0, -m, lam, 120), base, rtol=1e-10)


def test_resolvent_rejects_zero_m():
    with pytest.raises(ValueError):
        resolvent_norm_at(1.0, 0, 0.0)


def test_resolvent_set_certificate():
    for alpha, m in [(1e2, 1), (1e3, 2), (1e4, 3)]:
        for mu in np.linspace(-2, 2, 41):
            v = resolvent_norm_at(alpha, m, mu * alpha * m)
            assert np.isfinite(v) and v > 0


# -- sweeps --------------------------------------------------------------------


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec(base_points=2)
    with pytest.raises(ValueError):
        GridSpec(tail_max=1.0)
    with pytest.raises(ValueError):
        GridSpec(peak_rtol=0.0)
    mu = GridSpec().nonnegative_mu(1e4)
    assert mu[0] == 0.0 and mu[-1] == 8.0
    assert np.all(np.diff(mu) > 0)


def test_sweep_rejects_zero():
    with pytest.raises(ValueError):
        sweep(0.0, 1)
    with pytest.raises(ValueError):
        sweep(10.0, 0)


@pytest.mark.parametrize("key", sorted(PSI_ORACLE))
def test_sweep_psi_oracle(key):
    r = sweep(*key)
    assert r.converged
    assert_allclose(r.psi, PSI_ORACLE[key], rtol=1e-6)
    assert_allclose(r.psi * r.norm_peak, 1.0, rtol=1e-15)
    assert np.all(np.isfinite(r.norms)) and np.all(r.norms > 0)
    assert abs(r.mu_peak) < 1.25
    # refinement never loses to the grid
    assert r.norm_peak >= r.norms.max() * (1 - 1e-12)


def test_sweep_is_mirrored():
    r = sweep(50.0, 2, COARSE)
    assert_allclose(r.mu_grid, -r.mu_grid[::-1], atol=0)
    assert_allclose(r.norms, r.norms[::-1], atol=0)
    assert_allclose(r.lam_grid, r.mu_grid * 100.0)


def test_sweep_symmetry_in_sign():
    base = sweep(1e2, 2, COARSE)
    for a, m in [(1e2, -2), (-1e2, 2), (-1e2, -2)]:
        other = sweep(a, m, COARSE)
        assert_allclose(other.psi, base.psi, rtol=1e-8)
        assert_allclose(fit_envelope_constant(other), fit_envelope_constant(base), rtol=1e-8)


def test_sweep_truncation_failure_is_reported():
    spec = GridSpec(base_points=11, tail_points=2, edge_points=0, psi_rtol=1e-15, max_doublings=1, n_hi=40)
    r = sweep(1e5, 1, spec)
    assert not r.converged
    assert len(r.psi_history) == 2
    with pytest.raises(TruncationError) as info:
        sweep(1e5, 1, spec, strict=True)
    assert isinstance(info.value, NumericalContractError)


def test_envelope_constant_is_stable():
    c3 = fit_envelope_constant(sweep(1e3, 1))
    c2 = fit_envelope_constant(sweep(1e2, 1))
    assert c2 > 0 and c3 > 0
    assert max(c2, c3) / min(c2, c3) < 5


# -- envelopes -----------------------------------------------------------------


@pytest.mark.parametrize("mu, expected", [(0.0, 100 ** (-2 / 3)), (1.0, 0.1), (2.0, 0.01), (-2.0, 0.01)])
def test_envelope_G_branches(mu, expected):
    assert_allclose(envelope_G(100.0, 1, mu), expected, rtol=1e-14)


def test_envelope_G_oracle_digits():
    assert_allclose(envelope_G(100.0, 1, 0.0), 0.0464159, atol=1e-7)


def test_envelope_G_vectorised_and_symmetric():
    mu = np.linspace(-3, 3, 61)
    g = envelope_G(1e3, 2, mu)
    assert g.shape == mu.shape
    assert_allclose(g, g[::-1])
    assert_allclose(g, envelope_G(-1e3, -2, mu))
    with pytest.raises(ValueError):
        envelope_G(0.0, 1, 0.0)


def test_h_functions():
    assert_allclose(h1(10.0, 0.0, 1), 0.1, rtol=1e-15)
    assert_allclose(h2(10.0, 0.0, 1), 0.1, rtol=1e-15)
    assert h1(10.0, 1.5, 1) == 0.0
    assert h2(10.0, 1.5, 1) == 0.0
    k = EnvelopeParams().kappa
    assert_allclose(h1(10.0, 1.0, 4), 0.5 / math.sqrt(10))
    assert_allclose(h2(2.0, 1.0 + k / 8, 1), 0.25)


@given(st.floats(1e-3, 1e3), st.floats(-3, 3), st.integers(1, 10))
def test_h_functions_nonnegative(xi, mu, m):
    assert h1(xi, mu, m) >= 0
    assert h2(xi, mu, m) >= 0


def test_envelope_params_bounds():
    assert EnvelopeParams().kappa == 1 / 16
    for bad in (0.0, 0.5, -0.1):
        with pytest.raises(ValueError):
            EnvelopeParams(bad)


def test_regime_xi():
    k = 1 / 16
    x1, x2 = regime_xi(1e4, 1, 2.0)
    assert_allclose((x1, x2 ** 2), (2 * k, 2 * k))
    x1, x2 = regime_xi(1e4, 1, 1.0)
    assert_allclose((x1, x2 ** 2), (k * 50, k * 50))
    x1, x2 = regime_xi(1e3, 1, 0.0)
    assert_allclose((x1, x2), (10.0, 10.0), rtol=1e-14)


def test_envelope_F_infimum_dominance():
    for alpha in np.geomspace(10, 1e5, 20):
        for mu in np.linspace(-2, 2, 20):
            for m in (1, 2, 5):
                closed, numeric = envelope_F(alpha, mu, m, grid_points=9)
                assert 0 <= numeric <= closed


def test_envelope_F_closed_form_scaling():
    vals = []
    for alpha in (1e3, 1e4, 1e5):
        mus = np.concatenate([np.linspace(0, 3, 301), 1 + np.linspace(-3, 3, 61) / math.sqrt(alpha)])
        sup = max(envelope_F(alpha, mu, 1, grid_points=3)[0] for mu in mus)
        vals.append(sup * math.sqrt(alpha))
    assert max(vals) / min(vals) < 2


# -- coercivity ------------------------------------------------------------


@pytest.fixture(scope="module")
def scan_m1():
    return coercivity_scan(1, [0.0, 0.5, 0.9, 1.05, 1.1, 1.5, 2.0, 3.0])


def test_coercivity_records_converge(scan_m1):
    assert all(r.converged for r in scan_m1)
    assert all(r.m == 1 for r in scan_m1)
    assert set(scan_m1[0].as_dict()) >= {"m", "mu", "s_min", "ratio_high", "c_combined", "c_b3"}


def test_coercivity_high_branch(scan_m1):
    high = [r for r in scan_m1 if abs(r.mu) > 1]
    ratios = np.array([r.ratio_high for r in high])
    assert np.all(ratios > 0)
    assert ratios.max() / ratios.min() < 10
    s3 = next(r.s_min for r in high if r.mu == 3.0)
    assert s3 >= 2 - 1e-9
    low = [r for r in scan_m1 if abs(r.mu) <= 1]
    assert all(math.isnan(r.ratio_high) for r in low)


def test_coercivity_combined_forms(scan_m1):
    low = [r for r in scan_m1 if abs(r.mu) <= 1]
    c = np.array([r.c_combined for r in low])
    b = np.array([r.c_b3 for r in scan_m1])
    assert np.all(c > 0) and c.max() / c.min() < 10
    assert np.all(b > 0)


def test_coercivity_injective_at_zero():
    r = coercivity_scan(3, [0.0], n_hi=64, max_n_hi=64)[0]
    # even reduced dimension (3..66)
    assert r.s_min > 0


def test_coercivity_sign_symmetry():
    a = coercivity_scan(2, [0.3, 1.5], n_hi=128, max_n_hi=256)
    b = coercivity_scan(-2, [-0.3, -1.5], n_hi=128, max_n_hi=256)
    for x, y in zip(a, b):
        assert_allclose([x.s_min, x.c_combined, x.c_b3], [y.s_min, y.c_combined, y.c_b3], rtol=1e-9)


def test_coercivity_strict_reports_truncation():
    with pytest.raises(TruncationError):
        coercivity_scan(1, [1.05], n_hi=64, max_n_hi=128, strict=True)
    with pytest.raises(ValueError):
        coercivity_scan(0, [0.0])
