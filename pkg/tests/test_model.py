import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lambdaspec.core import InvalidArgument
from lambdaspec.model import (
    DETUNING_SIGN,
    ModelParams,
    build_expansion,
    dark_state,
    detuning_sign_audit,
    emission_quadrature,
    internal_liouvillian,
    thermal_mu,
)
from lambdaspec.oracle import build_full_liouvillian

from conftest import FIG2, FIG2A, GENERIC


def _dense(sop, d):
    cols = []
    for k in range(d * d):
        E = np.zeros(d * d, complex)
        E[k] = 1.0
        cols.append(sop.apply(E.reshape(d, d, order="F")).reshape(-1, order="F"))
    return np.column_stack(cols)


@pytest.mark.parametrize(
    "change",
    [dict(gamma1=-1.0), dict(eta2=-0.1), dict(n_max=0), dict(omega1=0.0, omega2=0.0),
     dict(gamma1=0.0, gamma2=0.0), dict(pattern="cardioid"), dict(pattern=1.5),
     dict(delta=float("nan"))],
)
def test_params_validation(change):
    with pytest.raises(InvalidArgument):
        FIG2A.with_(**change)


def test_params_derived_quantities():
    p = FIG2A
    assert p.gamma == 10.0
    assert p.omega_sq == pytest.approx(2 * 8.5**2)
    # eta1 cos(phi1) - eta2 cos(phi2) with counter-propagating beams
    assert p.eta == pytest.approx(0.02)
    assert p.beta == pytest.approx(1 / 3)
    assert p.with_(pattern="dipole").beta == pytest.approx(2 / 5)
    assert p.with_(pattern=0.25).beta == pytest.approx(0.25)


def test_dark_state_is_stationary_and_dark():
    for p in (FIG2A, GENERIC):
        rho = dark_state(p).matrix
        L = internal_liouvillian(p)
        assert np.allclose(L.apply(rho), 0, atol=1e-12)
        assert abs(rho[2, 2]) < 1e-15
        assert abs(np.trace(rho) - 1) < 1e-15


@given(st.floats(0.0, 2.0))
def test_thermal_state(n_bar):
    mu = thermal_mu(n_bar, 80).matrix
    assert np.trace(mu) == pytest.approx(1.0)
    assert np.sum(np.arange(81) * np.diag(mu)) == pytest.approx(n_bar, rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("pattern,beta", [("isotropic", 1 / 3), ("dipole", 2 / 5), (0.6, 0.6)])
def test_emission_quadrature_moments(pattern, beta):
    u, w = emission_quadrature(pattern, 16)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.dot(w, u) == pytest.approx(0.0, abs=1e-14)
    assert np.dot(w, u**2) == pytest.approx(beta, abs=1e-14)
    with pytest.raises(InvalidArgument):
        emission_quadrature(pattern, 0)


def test_expansion_orders_scale_with_eta():
    X = np.random.default_rng(3).standard_normal((12, 12))
    e1 = build_expansion(GENERIC.with_(n_max=3))
    e2 = build_expansion(GENERIC.with_(n_max=3, eta1=2 * GENERIC.eta1, eta2=2 * GENERIC.eta2))
    assert np.allclose(e2.L1.apply(X), 2 * e1.L1.apply(X))
    assert np.allclose(e2.L2.apply(X), 4 * e1.L2.apply(X))
    assert np.allclose(e2.D1.matrix, 2 * e1.D1.matrix)
    assert np.allclose(e2.D2.matrix, 4 * e1.D2.matrix)
    assert np.allclose(e1.L0.apply(X), e2.L0.apply(X))


def test_detector_terms_vanish_perpendicular():
    e = build_expansion(GENERIC.with_(psi=math.pi / 2, n_max=3))
    assert np.abs(e.D1.matrix).max() < 1e-17
    assert np.abs(e.D2.matrix).max() < 1e-30


def test_zero_order_stationary_states():
    e = build_expansion(GENERIC.with_(n_max=5))
    mu = thermal_mu(0.7, 5).matrix
    rho = np.kron(e.rho_D.matrix, mu)
    assert np.abs(e.L0.apply(rho)).max() < 1e-12


def test_expansion_matches_full_liouvillian_to_third_order():
    """``L_full - (L0 + L1 + L2)`` must vanish as ``eta**3``."""
    errs = []
    etas = np.array([0.01, 0.02, 0.04])
    for s in etas:
        p = GENERIC.with_(n_max=3, eta1=s, eta2=0.7 * s)
        e = build_expansion(p)
        d = 3 * (p.n_max + 1)
        approx = _dense(e.L0, d) + _dense(e.L1, d) + _dense(e.L2, d)
        full = build_full_liouvillian(p, 16).L.matrix
        errs.append(np.abs(full - approx).max())
    slope = np.polyfit(np.log(etas), np.log(errs), 1)[0]
    assert slope == pytest.approx(3.0, abs=0.1)


def test_detuning_sign_audit():
    rep = detuning_sign_audit(ModelParams(**FIG2, eta1=0.01, eta2=0.01))
    assert rep["chosen"] == DETUNING_SIGN == 1
    assert rep["abs_spectra_agree"]
    assert rep["conventions"][1]["cooling"]
    assert not rep["conventions"][-1]["cooling"]
