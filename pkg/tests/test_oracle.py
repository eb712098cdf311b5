import numpy as np
import pytest

from lambdaspec.core import InvalidArgument, Operator
from lambdaspec.model import build_expansion, thermal_mu
from lambdaspec.oracle import (
    SteadyStateDegeneracyError,
    build_full_liouvillian,
    fit_lorentzian,
    oracle_spectrum,
    steady_state,
)
from lambdaspec.perturbation import phonon_coefficients
from lambdaspec.spectrum import compute_spectrum, elastic_peak_weight

from conftest import FIG2A

SMALL = FIG2A.with_(n_max=5)
PROBE = np.array([-30.0, -1.0000332, -0.5, 0.3, 1.0000332, 20.0])


def _spectrum(p, nodes=16, omega=PROBE):
    full = build_full_liouvillian(p, nodes)
    return oracle_spectrum(full, steady_state(full), omega)


def _mean_n(p, rho):
    M = p.n_max + 1
    return float(np.real(np.trace(np.kron(np.eye(3), np.diag(np.arange(M))) @ rho)))


def test_steady_state_properties():
    full = build_full_liouvillian(SMALL)
    rho = steady_state(full).matrix
    assert abs(np.trace(rho) - 1) < 1e-12
    assert np.allclose(rho, rho.conj().T)
    assert np.linalg.eigvalsh(rho).min() > -1e-10
    L = full.L.matrix
    assert np.abs(L @ rho.reshape(-1, order="F")).max() < 1e-12


def test_steady_state_phonon_number_close_to_closed_form():
    full = build_full_liouvillian(SMALL)
    n = _mean_n(SMALL, steady_state(full).matrix)
    c = phonon_coefficients(build_expansion(SMALL))
    assert n == pytest.approx(c.n_bar, rel=0.05)


def test_truncation_doubling():
    ns = []
    for n_max in (5, 10):
        p = FIG2A.with_(n_max=n_max)
        ns.append(_mean_n(p, steady_state(build_full_liouvillian(p)).matrix))
    assert abs(ns[1] - ns[0]) < 1e-6


def test_zero_coupling_has_degenerate_steady_state_and_no_spectrum():
    p = SMALL.with_(eta1=0.0, eta2=0.0)
    full = build_full_liouvillian(p)
    with pytest.raises(SteadyStateDegeneracyError):
        steady_state(full)
    e = build_expansion(p)
    rho = np.kron(e.rho_D.matrix, thermal_mu(0.3, p.n_max).matrix)
    res = oracle_spectrum(full, Operator(full.L.space, rho), PROBE)
    assert np.abs(res.S).max() < 1e-14
    assert res.elastic_weight < 1e-28


def test_quadrature_node_invariance():
    ref = _spectrum(SMALL, 16)
    for nodes in (8, 12, 24):
        s = _spectrum(SMALL, nodes)
        assert np.max(np.abs(s.S - ref.S) / np.abs(ref.S)) < 1e-6


def test_emission_pattern_enters_beyond_second_order():
    etas = np.array([0.01, 0.02, 0.04])
    mollow = np.abs(np.abs(PROBE) - 1) > 0.1
    absolute, relative = [], []
    for eta in etas:
        p = SMALL.with_(eta1=eta, eta2=eta)
        a, b = _spectrum(p), _spectrum(p.with_(pattern="dipole"))
        absolute.append(np.max(np.abs(a.S - b.S)[mollow]))
        relative.append(np.max(np.abs(a.S - b.S) / np.abs(a.S)))
    # Mollow features are O(eta^2), so an eta^4 change; relative to the
    # spectrum (sideband peaks are O(1)) the change is O(eta^2)
    assert np.polyfit(np.log(etas), np.log(absolute), 1)[0] > 3.9
    assert np.polyfit(np.log(etas), np.log(relative), 1)[0] == pytest.approx(2.0, abs=0.1)
    p = SMALL.with_(eta1=1e-3, eta2=1e-3)
    a, b = _spectrum(p), _spectrum(p.with_(pattern="dipole"))
    assert np.max(np.abs(a.S - b.S) / np.abs(a.S)) < 1e-6


def test_elastic_weight_slope_and_value():
    etas = np.array([0.005, 0.01, 0.02])
    w = []
    for eta in etas:
        p = SMALL.with_(eta1=eta, eta2=eta)
        w.append(_spectrum(p, omega=[0.5]).elastic_weight)
    assert np.polyfit(np.log(etas), np.log(w), 1)[0] == pytest.approx(4.0, abs=0.2)
    pert = elastic_peak_weight(build_expansion(SMALL))
    assert w[1] == pytest.approx(pert, rel=0.01)


def test_matches_perturbative_spectrum_off_resonance():
    om = np.array([-30.0, -10.0, -3.0, -0.3, 0.0055, 0.4, 2.5, 20.0])
    o = _spectrum(SMALL, omega=om)
    p = compute_spectrum(SMALL, om)
    assert np.max(np.abs(o.S - p.S_total) / p.S_total) < 0.05


def test_invalid_quadrature():
    with pytest.raises(InvalidArgument):
        build_full_liouvillian(SMALL, 0)


def test_fit_lorentzian_recovers_parameters():
    w = np.linspace(-1.01, -0.99, 201)
    S = 3.0 * 0.002**2 / ((w + 1.0003) ** 2 + 0.002**2) + 0.1
    fit = fit_lorentzian(w, S, -1.0, 0.001)
    assert fit.center == pytest.approx(-1.0003, abs=1e-9)
    assert fit.halfwidth == pytest.approx(0.002, rel=1e-6)
    assert fit.height == pytest.approx(3.0, rel=1e-6)
    assert fit.offset == pytest.approx(0.1, rel=1e-6)
