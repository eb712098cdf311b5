"""
Second-order resonance-fluorescence spectrum in the Lamb-Dicke expansion.

The spectrum is a sum of complex-weighted poles,
``S(omega) = Re sum_lambda g(lambda) / (i omega - lambda)``, with
``omega`` measured from the frequency of laser 1 in units of the trap
frequency. Weights are obtained by separating every trace into an internal
part (evaluated with the 9 x 9 spectral decomposition of ``L_I``) and an
external part (closed-form Fock-space traces).

The sideband poles sit at ``+-i(1 + nu_bar) - gamma_S / 2``: the coherence
``|n><n+1|`` relaxes at half the phonon-number relaxation rate ``gamma_S``,
so ``gamma_S`` is the full width at half maximum of each sideband. The
integrated sideband power ``pi s0 gamma_S`` follows from the closed-form
height ``s0``; the peak value is therefore ``2 s0``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import (
    InvalidArgument,
    NumericalFailure,
    SingularResolventError,
    reduced_resolvent,
    unvec,
    vec,
)
from .model import ExpansionOperators, ModelParams, build_expansion
from .perturbation import (
    HeatingRegimeError,
    PerturbativeState,
    PhononCoefficients,
    correct_eigenspace,
    phonon_coefficients,
    projector_corrections,
)

log = logging.getLogger(__name__)

__all__ = [
    "Component",
    "LineShapeTerm",
    "SpectrumResult",
    "ExternalTraces",
    "external_trace_identities",
    "explicit_external_traces",
    "closed_form_f",
    "trace_formula_f",
    "g_weights",
    "SidebandClosedForm",
    "sideband_closed_form",
    "elastic_peak_weight",
    "composite_weights",
    "VanishingReport",
    "vanishing_order_checks",
    "sample_spectrum",
    "compute_spectrum",
]


class Component(enum.Enum):
    SIDEBAND = "sideband"
    MOLLOW = "mollow"


@dataclass(frozen=True)
class LineShapeTerm:
    """One pole of the second-order spectrum.

    ``lam`` is the pole, ``weight`` the complex weight ``g``;
    ``lambda_I`` and ``ell`` record its zero-order origin
    ``lambda_I + i ell``.
    """

    lam: complex
    weight: complex
    component: Component
    lambda_I: complex = 0j
    ell: int = 0

    def __call__(self, omega) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        return np.real(self.weight / (1j * omega - self.lam))

    @property
    def center(self) -> float:
        return float(self.lam.imag)

    @property
    def peak(self) -> float:
        """Value at the center frequency."""
        return float(np.real(self.weight / (-self.lam.real)))


@dataclass(frozen=True, eq=False)
class SpectrumResult:
    """Sampled spectrum, split into components.

    The elastic peak ``pi elastic_weight delta(omega)`` is reported as a
    weight and never sampled onto the grid.
    """

    omega_grid: np.ndarray
    S_total: np.ndarray
    S_SB: np.ndarray
    S_M: np.ndarray
    elastic_weight: float
    terms: tuple[LineShapeTerm, ...] = ()
    summary: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# external traces
# ---------------------------------------------------------------------------


class ExternalTraces(NamedTuple):
    """``Tr{(P mu x) x}``, ``Tr{(P [x, mu]) x}`` and ``Tr{x^2 mu}``."""

    mu_x: float
    commutator: float
    x2: float


def _sector_of(lambda_E: complex, tol: float = 1e-9) -> int | None:
    lambda_E = complex(lambda_E)
    ell = round(lambda_E.imag)
    if abs(lambda_E - 1j * ell) > tol:
        return None
    return int(ell)


def external_trace_identities(n_bar: float, lambda_E: complex) -> ExternalTraces:
    """Closed-form external traces for a thermal phonon state.

    Only ``lambda_E in {0, +i, -i}`` contribute; any other value returns
    zeros.
    """
    if n_bar < 0:
        raise InvalidArgument("n_bar must be >= 0")
    ell = _sector_of(lambda_E)
    if ell not in (-1, 0, 1):
        return ExternalTraces(0.0, 0.0, 0.0)
    x2 = 2 * n_bar + 1
    if ell == 0:
        return ExternalTraces(0.0, 0.0, x2)
    if ell == 1:
        return ExternalTraces(n_bar + 1, -1.0, x2)
    return ExternalTraces(n_bar, 1.0, x2)


def _external_projector(X: np.ndarray, ell: int) -> np.ndarray:
    # keep the |n><n + ell| entries, the lambda_E = i ell eigenspace
    M = X.shape[0]
    mask = np.zeros((M, M), bool)
    n = np.arange(M)
    ok = (n + ell >= 0) & (n + ell < M)
    mask[n[ok], n[ok] + ell] = True
    return np.where(mask, X, 0)


def explicit_external_traces(mu: np.ndarray, x: np.ndarray, lambda_E: complex) -> ExternalTraces:
    """Evaluate the same traces by projecting explicitly on a Fock space.

    As for the closed forms, sectors other than ``lambda_E in {0, +-i}``
    give zero.
    """
    ell = _sector_of(lambda_E)
    if ell not in (-1, 0, 1):
        return ExternalTraces(0.0, 0.0, 0.0)
    mu, x = np.asarray(mu), np.asarray(x)
    mux = _external_projector(mu @ x, ell)
    com = _external_projector(x @ mu - mu @ x, ell)
    return ExternalTraces(
        float(np.real(np.trace(mux @ x))),
        float(np.real(np.trace(com @ x))),
        float(np.real(np.trace(x @ x @ mu))),
    )


# ---------------------------------------------------------------------------
# sideband amplitude f
# ---------------------------------------------------------------------------


def closed_form_f(params: ModelParams, lambda_E: complex) -> complex:
    """Closed form of the sideband amplitude ``f(lambda_E)``."""
    p = params
    lam = complex(lambda_E)
    om2 = p.omega_sq
    num = -2j * p.eta * lam * p.omega1 * p.omega2**2
    den = om2 * (om2 + 4 * lam * (1j * p.delta + lam + 0.5 * p.gamma))
    return complex(num / den)


def trace_formula_f(exp: ExpansionOperators, lambda_E: complex) -> complex:
    """``f(lambda_E) = Tr_I{D0^+ (lambda_E - L_I)^{-1} [V1, rho_D]}``.

    The stationary direction is excluded; ``[V1, rho_D]`` is traceless so
    it carries no component along it.
    """
    dec = exp.decomposition
    V1, rD = exp.V1.matrix, exp.rho_D.matrix
    src = V1 @ rD - rD @ V1
    k0 = dec.stationary_index()
    R = reduced_resolvent(dec, lambda_E, exclude=[dec.eigenvalues[k0]])
    return complex(R.apply(src)[0, 2])


# ---------------------------------------------------------------------------
# factorized second-order weights
# ---------------------------------------------------------------------------


def _d0_trace(X: np.ndarray) -> complex:
    # Tr{|3><1| X} = <1|X|3>
    return complex(X[0, 2])


def _zero_coupling(exp: ExpansionOperators) -> bool:
    return not np.any(exp.V1.matrix) and not np.any(exp.V2.matrix)


class _Weights:
    """Internal ingredients shared by all poles."""

    def __init__(self, exp: ExpansionOperators, coeffs: PhononCoefficients):
        self.exp = exp
        self.dec = exp.decomposition
        self.V1 = exp.V1.matrix
        self.V2 = exp.V2.matrix
        self.rD = exp.rho_D.matrix
        self.D0 = exp.D0.matrix
        self.k0 = self.dec.stationary_index()
        self.lam_st = self.dec.eigenvalues[self.k0]
        n = coeffs.n_bar
        self.T_mux = {l: external_trace_identities(n, 1j * l).mu_x for l in (1, -1)}
        self.T_xmu = {
            l: external_trace_identities(n, 1j * l).mu_x
            + external_trace_identities(n, 1j * l).commutator
            for l in (1, -1)
        }
        self.T_x2 = external_trace_identities(n, 0).x2
        self.a, self.b = {}, {}
        for l in (1, -1):
            R = self.resolvent(-1j * l, 0j, 0)
            self.a[l] = R(self.V1 @ self.rD)
            self.b[l] = R(self.rD @ self.V1)

    def comm(self, A, Y):
        return A @ Y - Y @ A

    def resolvent(self, z, lam_I, ell, exclude=()):
        try:
            R = reduced_resolvent(self.dec, z, exclude=exclude)
        except SingularResolventError as exc:
            raise SingularResolventError(
                z, exc.colliding, f"pole lambda_I = {lam_I:.6g}, lambda_E = {1j * ell:.3g}"
            ) from None
        return R.apply

    def projector(self, group):
        P = self.dec.projector(group)
        return lambda X: unvec(P @ vec(X), 3)

    def term_A(self, group, lam_I, ell):
        PI = self.projector(group)
        R = self.resolvent(lam_I + 1j * ell, lam_I, ell)
        D0 = self.D0
        ta = _d0_trace(R(self.comm(self.V1, PI(D0 @ self.a[ell]))))
        tb = _d0_trace(R(self.comm(self.V1, PI(D0 @ self.b[ell]))))
        return -(ta * self.T_xmu[ell] - tb * self.T_mux[ell])

    def term_B(self, group, lam_I):
        PI = self.projector(group)
        D0 = self.D0
        out = 0j
        for l in (1, -1):
            R = self.resolvent(lam_I - 1j * l, lam_I, 0)
            ta = _d0_trace(PI(self.comm(self.V1, R(D0 @ self.a[l]))))
            tb = _d0_trace(PI(self.comm(self.V1, R(D0 @ self.b[l]))))
            out -= ta * self.T_xmu[l] - tb * self.T_mux[l]
        return out

    def sigma2(self):
        src = sum(
            self.comm(self.V1, self.b[l]) * self.T_mux[l]
            - self.comm(self.V1, self.a[l]) * self.T_xmu[l]
            for l in (1, -1)
        ) - 0.5j * self.T_x2 * self.comm(self.V2, self.rD)
        leak = abs(self.dec.coefficients(src)[self.k0])
        if leak > 1e-10 * max(np.abs(src).max(), 1e-300):
            raise NumericalFailure(f"second-order source has a stationary component {leak:.3g}")
        # -L_I^{-1} on the complement of the stationary space
        R = reduced_resolvent(self.dec, 0.0, exclude=[self.lam_st])
        return R.apply(src)

    def f2(self, group, sigma2):
        return _d0_trace(self.projector(group)(self.D0 @ sigma2))


def g_weights(
    exp: ExpansionOperators, coeffs: PhononCoefficients | None = None
) -> list[LineShapeTerm]:
    """Second-order pole weights ``g = f1 + f2`` for every relevant pole.

    For each eigenvalue group of ``L_I`` and ``lambda_E in {0, +-i}``:
    the stationary group gives the two sidebands (poles shifted by the
    second-order correction), all other groups give Mollow-type terms with
    zero-order poles. The elastic pole at zero is fourth order and is
    reported by :func:`elastic_peak_weight`.

    Raises
    ------
    HeatingRegimeError
        Outside the cooling regime.
    SingularResolventError
        If a pole collides with an eigenvalue of another sector.
    """
    if _zero_coupling(exp):
        return []
    if coeffs is None:
        coeffs = phonon_coefficients(exp)
    w = _Weights(exp, coeffs)
    dec = w.dec
    sig2 = w.sigma2()
    halfwidth = coeffs.sideband_halfwidth
    terms: list[LineShapeTerm] = []
    for group in dec.groups:
        lam_I = complex(np.mean(dec.eigenvalues[list(group)]))
        if w.k0 in group:
            for ell in (1, -1):
                pole = 1j * ell * (1 + coeffs.nu_bar) - halfwidth
                terms.append(
                    LineShapeTerm(pole, w.term_A(group, lam_I, ell), Component.SIDEBAND, lam_I, ell)
                )
            continue
        g0 = w.term_B(group, lam_I) + w.f2(group, sig2)
        terms.append(LineShapeTerm(lam_I, g0, Component.MOLLOW, lam_I, 0))
        for ell in (1, -1):
            terms.append(
                LineShapeTerm(
                    lam_I + 1j * ell, w.term_A(group, lam_I, ell), Component.MOLLOW, lam_I, ell
                )
            )
    return terms


# ---------------------------------------------------------------------------
# closed-form sidebands
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SidebandClosedForm:
    """Closed-form Stokes/anti-Stokes lines.

    ``s0`` is the closed-form height (product form); ``s0_alt`` is the
    detuning-ratio form, kept as a cross-check. Each line is a Lorentzian
    of half-width ``halfwidth = gamma_S / 2`` and integrated power
    ``pi s0 gamma_S``, so its peak value is ``peak = 2 s0``.
    """

    f_plus: complex
    f_minus: complex
    s0: float
    s0_alt: float
    center: float
    halfwidth: float

    @property
    def peak(self) -> float:
        return 2.0 * self.s0

    def __call__(self, omega) -> np.ndarray:
        omega = np.asarray(omega, dtype=float)
        G = self.halfwidth
        out = np.zeros_like(omega)
        for sgn in (1, -1):
            out = out + self.peak * G**2 / ((omega + sgn * self.center) ** 2 + G**2)
        return out


def sideband_closed_form(
    params: ModelParams, coeffs: PhononCoefficients, rtol_alt: float = 1e-6
) -> SidebandClosedForm:
    """Closed-form sideband amplitudes, height and line shape."""
    if coeffs.gamma_S <= 0:
        raise HeatingRegimeError(coeffs.A_plus, coeffs.A_minus)
    p = params
    n = coeffs.n_bar
    s0 = p.omega2**2 / (p.gamma * p.omega_sq) * n * (1 + n)
    om2 = p.omega_sq
    gt = coeffs.gamma_S / p.eta**2
    den = 4 * gt * p.delta * om2**2 * (om2 - 4.0)
    s0_alt = p.omega1**2 * p.omega2**4 / den if den != 0 else math.inf
    if not math.isfinite(s0_alt) or abs(s0_alt - s0) > rtol_alt * abs(s0):
        log.info("sideband height: product form %.10g, detuning-ratio form %.10g", s0, s0_alt)
    return SidebandClosedForm(
        f_plus=closed_form_f(p, 1j),
        f_minus=closed_form_f(p, -1j),
        s0=float(s0),
        s0_alt=float(s0_alt),
        center=1.0 + coeffs.nu_bar,
        halfwidth=coeffs.sideband_halfwidth,
    )


# ---------------------------------------------------------------------------
# elastic peak and composite-space checks
# ---------------------------------------------------------------------------


def elastic_peak_weight(
    exp: ExpansionOperators, state: PerturbativeState | None = None
) -> float:
    """``|Tr{D0^+ rho2} + Tr{D1^+ rho1}|^2`` at the stationary eigenvalue."""
    if _zero_coupling(exp):
        return 0.0
    if state is None:
        state = correct_eigenspace(exp, 0.0)
    M = exp.n_max + 1
    D0c = np.kron(exp.D0.matrix, np.eye(M))
    amp = np.trace(D0c.conj().T @ state.rho2.matrix) + np.trace(
        exp.D1.matrix.conj().T @ state.rho1.matrix
    )
    return float(abs(amp) ** 2)


def _tr(D, X):
    return complex(np.einsum("ji,ji->", D.conj(), X))


_SIX = ("D1+P1D0r0", "D0+P1D1r0", "D1+P0D0r1", "D0+P0D1r1", "D2+P0D0r0", "D0+P0D2r0")
_S1 = ("D0+P1D0r0", "D1+P0D0r0", "D0+P0D1r0", "D0+P0D0r1")


def composite_weights(
    exp: ExpansionOperators,
    state: PerturbativeState | None = None,
    ells: Sequence[int] = (-2, -1, 0, 1, 2),
) -> list[dict]:
    """Every second-order trace term evaluated on the composite space.

    For each zero-order pole ``lambda_I + i ell`` this returns the terms
    ``f1 = Tr{D0^+ P1 D0 rho1}``, ``f2 = Tr{D0^+ P0 D0 rho2}``, the
    zero- and first-order terms and the six detector-angle terms. Used as
    an independent check of :func:`g_weights`.
    """
    if state is None:
        state = correct_eigenspace(exp, 0.0)
    M = exp.n_max + 1
    D0 = np.kron(exp.D0.matrix, np.eye(M))
    D1, D2 = exp.D1.matrix, exp.D2.matrix
    r0, r1, r2 = state.rho0.matrix, state.rho1.matrix, state.rho2.matrix
    dec = exp.decomposition
    out = []
    for group in dec.groups:
        lam_I = complex(np.mean(dec.eigenvalues[list(group)]))
        for ell in ells:
            lam0 = lam_I + 1j * ell
            P0, P1 = projector_corrections(exp, lam0)
            terms = {
                "f1": _tr(D0, P1(D0 @ r1)),
                "f2": _tr(D0, P0(D0 @ r2)),
                "S0": _tr(D0, P0(D0 @ r0)),
                "D0+P1D0r0": _tr(D0, P1(D0 @ r0)),
                "D1+P0D0r0": _tr(D1, P0(D0 @ r0)),
                "D0+P0D1r0": _tr(D0, P0(D1 @ r0)),
                "D0+P0D0r1": _tr(D0, P0(D0 @ r1)),
                "D1+P1D0r0": _tr(D1, P1(D0 @ r0)),
                "D0+P1D1r0": _tr(D0, P1(D1 @ r0)),
                "D1+P0D0r1": _tr(D1, P0(D0 @ r1)),
                "D0+P0D1r1": _tr(D0, P0(D1 @ r1)),
                "D2+P0D0r0": _tr(D2, P0(D0 @ r0)),
                "D0+P0D2r0": _tr(D0, P0(D2 @ r0)),
            }
            out.append({"lambda_I": lam_I, "ell": ell, "lambda0": lam0, **terms})
    return out


@dataclass
class VanishingReport:
    """Outcome of the vanishing-order checks, relative to ``s0``."""

    scale: float
    S0_max: float
    S1_max: float
    six_max: dict
    psi_shift: float
    beta_swap: float
    tol: float
    details: list = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        vals = [self.S0_max, self.S1_max, self.psi_shift, self.beta_swap, *self.six_max.values()]
        return all(v < self.tol for v in vals)

    def failures(self) -> list[str]:
        out = []
        for name, v in [("S0", self.S0_max), ("S1", self.S1_max), ("psi", self.psi_shift),
                        ("beta", self.beta_swap), *self.six_max.items()]:
            if not v < self.tol:
                out.append(f"{name}: {v:.3g} >= {self.tol:.1g}")
        return out

    def as_dict(self) -> dict:
        return {
            "scale": self.scale,
            "S0_max": self.S0_max,
            "S1_max": self.S1_max,
            "six_max": dict(self.six_max),
            "psi_shift": self.psi_shift,
            "beta_swap": self.beta_swap,
            "tol": self.tol,
            "passed": self.passed,
        }


def _full_second_order(rows) -> np.ndarray:
    # all second-order trace terms, including the detector-angle ones
    keys = ("f1", "f2") + _SIX
    return np.array([sum(r[k] for k in keys) for r in rows])


def _sample(rows, key_fn, omega) -> np.ndarray:
    omega = np.asarray(omega, float)
    out = np.zeros(omega.shape, complex)
    for r in rows:
        out += key_fn(r) / (1j * omega - r["lambda0"])
    return out


def vanishing_order_checks(
    exp: ExpansionOperators,
    state: PerturbativeState | None = None,
    omega: Sequence[float] | None = None,
    tol: float = 1e-10,
    psi_shift: float = 0.7,
) -> VanishingReport:
    """Check that zero/first-order and detector-angle terms vanish.

    Every quantity is reported relative to the closed-form sideband
    height ``s0``.
    The full second-order weight set (including the detector-angle terms)
    is also recomputed after ``psi -> psi + psi_shift`` and after doubling
    ``beta``; the largest weight change is reported.
    """
    p = exp.params
    coeffs = phonon_coefficients(exp)
    scale = sideband_closed_form(p, coeffs).s0
    if state is None:
        state = correct_eigenspace(exp, 0.0)
    rows = composite_weights(exp, state)
    if omega is None:
        omega = np.linspace(-3.0, 3.0, 11)
    omega = np.asarray(omega, float)
    S0 = np.abs(_sample(rows, lambda r: r["S0"], omega)).max() / scale
    S1 = np.abs(_sample(rows, lambda r: sum(r[k] for k in _S1), omega)).max() / scale
    # single-pole weights are compared through their Lorentzian peak g / |Re lambda|
    widths = np.array([max(abs(r["lambda0"].real), coeffs.sideband_halfwidth) for r in rows])
    six = {k: float(np.max(np.abs([r[k] for r in rows]) / widths) / scale) for k in _SIX}
    base = _full_second_order(rows)

    def shifted(params):
        e2 = build_expansion(params, exp.sign)
        return _full_second_order(composite_weights(e2, correct_eigenspace(e2, 0.0)))

    d_psi = np.max(np.abs(shifted(p.with_(psi=p.psi + psi_shift)) - base) / widths) / scale
    d_beta = np.max(np.abs(shifted(p.with_(pattern=2 * p.beta)) - base) / widths) / scale
    return VanishingReport(
        scale=float(scale),
        S0_max=float(S0),
        S1_max=float(S1),
        six_max=six,
        psi_shift=float(d_psi),
        beta_swap=float(d_beta),
        tol=tol,
        details=rows,
    )


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def sample_spectrum(
    terms: Sequence[LineShapeTerm],
    elastic_weight: float,
    omega_grid: Sequence[float],
    summary: dict | None = None,
) -> SpectrumResult:
    """Evaluate ``Re sum g / (i omega - lambda)`` split by component."""
    omega = np.asarray(omega_grid, dtype=float)
    if omega.ndim != 1 or not np.all(np.isfinite(omega)):
        raise InvalidArgument("omega grid must be a finite 1-d array")
    if omega.size > 1 and np.any(np.diff(omega) <= 0):
        raise InvalidArgument("omega grid must be strictly increasing")
    S_SB = np.zeros_like(omega)
    S_M = np.zeros_like(omega)
    for t in terms:
        if t.component is Component.SIDEBAND:
            S_SB += t(omega)
        else:
            S_M += t(omega)
    total = S_SB + S_M
    if not np.all(np.isfinite(total)):
        raise NumericalFailure("non-finite spectrum values")
    return SpectrumResult(
        omega_grid=omega,
        S_total=total,
        S_SB=S_SB,
        S_M=S_M,
        elastic_weight=float(elastic_weight),
        terms=tuple(terms),
        summary=dict(summary or {}),
    )


def compute_spectrum(params: ModelParams, omega_grid: Sequence[float]) -> SpectrumResult:
    """Phonon coefficients, pole weights, elastic weight and sampled lines."""
    exp = build_expansion(params)
    coeffs = phonon_coefficients(exp)
    terms = g_weights(exp, coeffs)
    elastic = elastic_peak_weight(exp)
    sb = sideband_closed_form(params, coeffs)
    summary = {**coeffs.as_dict(), "s0": sb.s0, "sideband_peak": sb.peak,
               "sideband_halfwidth": sb.halfwidth}
    return sample_spectrum(terms, elastic, omega_grid, summary)
