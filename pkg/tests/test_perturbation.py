import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings

from lambdaspec.core import (
    NumericalFailure,
    SpaceLabel,
    SuperOperator,
    reduced_resolvent,
    spectral_decompose,
)
from lambdaspec.model import build_expansion, thermal_mu
from lambdaspec.perturbation import (
    HeatingRegimeError,
    L0Blocks,
    closed_form_s,
    correct_eigenspace,
    phonon_coefficients,
    phonon_effective_eigensystem,
    phonon_generator,
    projector_corrections,
    resolvent_s,
)

from conftest import FIG2A, FIG4, GENERIC, cooling_params

# frozen after independent evaluation of the closed form
FIG2_A_MINUS_OVER_ETA2 = 3.6102
FIG2_A_PLUS_OVER_ETA2 = 0.018273
FIG2_N_BAR = 0.0050871
FIG2_NU_BAR = 3.3203e-5
FIG4_N_BAR = 0.20404
FIG4_GAMMA_S_OVER_ETA2 = 0.17443
FIG4_NU_BAR_OVER_ETA2 = -0.24427


def _dense(sop, d):
    cols = []
    for k in range(d * d):
        E = np.zeros(d * d, complex)
        E[k] = 1.0
        cols.append(sop.apply(E.reshape(d, d, order="F")).reshape(-1, order="F"))
    return np.column_stack(cols)


def test_fig2_coefficients(fig2a_exp):
    c = phonon_coefficients(fig2a_exp)
    eta2 = FIG2A.eta**2
    assert c.A_minus / eta2 == pytest.approx(FIG2_A_MINUS_OVER_ETA2, rel=1e-4)
    assert c.A_plus / eta2 == pytest.approx(FIG2_A_PLUS_OVER_ETA2, rel=1e-4)
    assert c.n_bar == pytest.approx(FIG2_N_BAR, rel=1e-4)
    assert c.nu_bar == pytest.approx(FIG2_NU_BAR, rel=1e-4)
    assert c.gamma_S == pytest.approx(c.A_minus - c.A_plus)
    assert c.sideband_halfwidth == pytest.approx(c.gamma_S / 2)


def test_fig4_coefficients():
    c = phonon_coefficients(build_expansion(FIG4))
    eta2 = FIG4.eta**2
    assert c.n_bar == pytest.approx(FIG4_N_BAR, rel=1e-4)
    assert c.gamma_S / eta2 == pytest.approx(FIG4_GAMMA_S_OVER_ETA2, rel=1e-4)
    assert c.nu_bar / eta2 == pytest.approx(FIG4_NU_BAR_OVER_ETA2, rel=1e-4)


@settings(max_examples=25)
@given(cooling_params(n_max=1))
def test_closed_form_s_matches_resolvent(p):
    e = build_expansion(p)
    for nu in (1.0, -1.0, 0.37):
        assert abs(resolvent_s(e, nu) - closed_form_s(p, nu)) <= 1e-9 * abs(closed_form_s(p, nu))


def test_heating_regime_raises():
    p = FIG2A.with_(delta=-35.0)
    with pytest.raises(HeatingRegimeError) as info:
        phonon_coefficients(build_expansion(p))
    assert info.value.A_plus > info.value.A_minus
    c = phonon_coefficients(build_expansion(p), allow_heating=True)
    assert c.gamma_S < 0


def test_detailed_balance(fig2a_exp):
    c = phonon_coefficients(fig2a_exp)
    assert abs(c.n_bar / (1 + c.n_bar) - c.A_plus / c.A_minus) < 1e-12 * c.A_plus / c.A_minus


def test_phonon_generator_thermal_fixed_point():
    c = phonon_coefficients(build_expansion(GENERIC))
    G = phonon_generator(c, 60)
    mu = thermal_mu(c.n_bar, 60).matrix
    assert np.abs(G.apply(mu)).max() < 1e-12 * c.A_minus
    X = np.random.default_rng(0).standard_normal((61, 61))
    assert abs(np.trace(G.apply(X))) < 1e-10 * c.A_minus


def test_effective_eigensystem_labels():
    c = phonon_coefficients(build_expansion(GENERIC))
    modes = phonon_effective_eigensystem(c, 40, range(3), range(-1, 2))
    for m in modes:
        assert m.eigenvalue == pytest.approx(
            -1j * m.ell * c.nu_bar - (2 * m.N + abs(m.ell)) * c.gamma_S, abs=1e-10 * c.gamma_S
        )
    stat = next(m for m in modes if m.N == 0 and m.ell == 0)
    assert np.allclose(stat.right.matrix, thermal_mu(c.n_bar, 40).matrix, atol=1e-12)


def test_effective_eigensystem_detects_truncation():
    c = phonon_coefficients(build_expansion(GENERIC))
    big = dataclasses.replace(c, A_plus=c.A_minus * 0.95, gamma_S=c.A_minus * 0.05,
                              n_bar=19.0)
    with pytest.raises(NumericalFailure):
        phonon_effective_eigensystem(big, 10, range(2), range(1))


def test_l0_blocks_resolvent_matches_dense():
    p = GENERIC.with_(n_max=2)
    e = build_expansion(p)
    d = 9
    L0 = _dense(e.L0, d)
    dec_full = spectral_decompose(SuperOperator(SpaceLabel.composite(2), L0))
    blk = L0Blocks(e.decomposition, 2)
    rng = np.random.default_rng(4)
    X = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    for lam0 in (0.0, 1j):
        R = blk.resolvent(lam0, exclude=[lam0])
        Rd = reduced_resolvent(dec_full, lam0, exclude=[lam0])
        assert np.allclose(R(X), Rd.apply(X), atol=1e-9)


def test_projector_corrections_properties():
    e = build_expansion(GENERIC.with_(n_max=4))
    P0, P1 = projector_corrections(e, 1j)
    X = np.random.default_rng(5).standard_normal((15, 15))
    assert np.allclose(P0(P0(X)), P0(X), atol=1e-10)
    # first-order projector correction is off-diagonal with respect to P0
    assert np.allclose(P0(P1(P0(X))), 0, atol=1e-10)


@pytest.mark.parametrize("lam0", [0.0, 1j, -1j])
def test_first_order_shift_vanishes(generic_exp, lam0):
    st = correct_eigenspace(generic_exp, lam0)
    assert abs(st.lambda1) < 1e-12


def test_second_order_shifts():
    # the sideband shifts converge in n_max like the thermal tail
    e = build_expansion(GENERIC.with_(n_max=30))
    c = phonon_coefficients(e)
    for sgn in (1, -1):
        st = correct_eigenspace(e, sgn * 1j)
        assert st.lambda2 == pytest.approx(-c.gamma_S / 2 + sgn * 1j * c.nu_bar,
                                           abs=1e-9 * c.gamma_S)
    st = correct_eigenspace(e, 0.0, secular=True)
    assert st.lambda2_all[:3] == pytest.approx([0.0, -c.gamma_S, -2 * c.gamma_S],
                                               abs=1e-3 * c.gamma_S)


def test_stationary_corrections(fig2a_exp):
    fast = correct_eigenspace(fig2a_exp, 0.0)
    slow = correct_eigenspace(fig2a_exp, 0.0, secular=True)
    for name in ("rho0", "rho1", "rho2"):
        a, b = getattr(fast, name).matrix, getattr(slow, name).matrix
        assert np.abs(a - b).max() < 1e-8 * max(np.abs(b).max(), 1e-300)
    assert abs(np.trace(fast.rho0.matrix) - 1) < 1e-14
    assert abs(np.trace(fast.rho1.matrix)) < 1e-14
    assert abs(np.trace(fast.rho2.matrix)) < 1e-14
    assert abs(np.trace(slow.check_rho0.matrix @ slow.rho0.matrix) - 1) < 1e-10


def test_steady_state_residual_scales_as_eta_cubed():
    res = []
    etas = np.array([0.005, 0.01, 0.02])
    for s in etas:
        e = build_expansion(FIG2A.with_(eta1=s, eta2=s, n_max=6))
        st = correct_eigenspace(e)
        rho = st.rho0.matrix + st.rho1.matrix + st.rho2.matrix
        res.append(np.linalg.norm(e.L0.apply(rho) + e.L1.apply(rho) + e.L2.apply(rho)))
    slope = np.polyfit(np.log(etas), np.log(res), 1)[0]
    assert slope == pytest.approx(3.0, abs=0.1)
