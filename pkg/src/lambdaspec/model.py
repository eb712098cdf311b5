"""
Physics of the trapped Lambda atom: parameters, the dark state, the thermal
phonon distribution and the Lamb-Dicke expansion of the master equation.

Internal basis is ``|1>, |2>`` (ground states) and ``|3>`` (excited state),
stored at indices 0, 1, 2. Composite operators are ``internal (x) motional``.
All frequencies are in units of the trap frequency nu, positions in units of
the oscillator length x0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .core import (
    INTERNAL,
    InvalidArgument,
    Operator,
    SpaceLabel,
    SuperOperator,
    build_fock_operators,
    commutator_superop,
    lindblad_superop,
    spectral_decompose,
)

__all__ = [
    "DETUNING_SIGN",
    "ModelParams",
    "ExpansionOperators",
    "ket",
    "dyad",
    "dark_state",
    "thermal_mu",
    "internal_hamiltonian",
    "internal_liouvillian",
    "emission_quadrature",
    "build_expansion",
    "detuning_sign_audit",
]

#: Sign of the light shift in ``H0 = sign * delta * (|1><1| + |2><2|)``.
#: Fixed by :func:`detuning_sign_audit`; +1 cools for blue detuning.
DETUNING_SIGN = +1

PATTERN_BETA = {"isotropic": 1.0 / 3.0, "dipole": 2.0 / 5.0}


@dataclass(frozen=True)
class ModelParams:
    """Physical inputs, all in trap units (nu = 1).

    ``pattern`` is ``"isotropic"`` (N = 1/2), ``"dipole"``
    (N = 3/8 (1 + cos^2 theta)) or a float giving a custom
    ``beta = int N cos^2`` in (0, 1].
    """

    omega1: float
    omega2: float
    delta: float
    gamma1: float
    gamma2: float
    eta1: float
    eta2: float
    phi1: float = 0.0
    phi2: float = math.pi
    psi: float = math.pi / 2
    pattern: str | float = "isotropic"
    n_max: int = 15

    def __post_init__(self):
        for name in ("omega1", "omega2", "delta", "gamma1", "gamma2", "eta1", "eta2",
                     "phi1", "phi2", "psi"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise InvalidArgument(f"{name} must be a finite real number, got {v!r}")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise InvalidArgument("partial decay rates must be non-negative")
        if self.gamma <= 0:
            raise InvalidArgument("total decay rate gamma1 + gamma2 must be positive")
        if self.omega_sq <= 0:
            raise InvalidArgument("at least one Rabi frequency must be non-zero")
        if self.eta1 < 0 or self.eta2 < 0:
            raise InvalidArgument("Lamb-Dicke parameters must be non-negative")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise InvalidArgument(f"n_max must be an integer >= 1, got {self.n_max!r}")
        if isinstance(self.pattern, str):
            if self.pattern not in PATTERN_BETA:
                raise InvalidArgument(
                    f"pattern must be one of {sorted(PATTERN_BETA)} or a float beta"
                )
        else:
            b = float(self.pattern)
            if not 0 < b <= 1:
                raise InvalidArgument(f"custom beta must lie in (0, 1], got {b}")

    @property
    def gamma(self) -> float:
        return self.gamma1 + self.gamma2

    @property
    def omega_sq(self) -> float:
        return self.omega1**2 + self.omega2**2

    @property
    def eta(self) -> float:
        """Effective Lamb-Dicke parameter of the two-photon Raman coupling."""
        return self.eta1 * math.cos(self.phi1) - self.eta2 * math.cos(self.phi2)

    @property
    def beta(self) -> float:
        if isinstance(self.pattern, str):
            return PATTERN_BETA[self.pattern]
        return float(self.pattern)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# internal-space building blocks
# ---------------------------------------------------------------------------


def ket(i: int) -> np.ndarray:
    v = np.zeros(3, complex)
    v[i - 1] = 1.0
    return v


def dyad(i: int, j: int) -> np.ndarray:
    """``|i><j|`` with 1-based labels."""
    return np.outer(ket(i), ket(j))


def dark_state(params: ModelParams) -> Operator:
    """``|psi_D><psi_D|`` with ``|psi_D> = (Omega2 |1> - Omega1 |2>) / Omega``."""
    om = math.sqrt(params.omega_sq)
    if om == 0:
        raise InvalidArgument("dark state undefined for Omega = 0")
    psi = (params.omega2 * ket(1) - params.omega1 * ket(2)) / om
    return Operator(INTERNAL, np.outer(psi, psi.conj()))


def thermal_mu(n_bar: float, n_max: int) -> Operator:
    """Thermal phonon state with mean occupation ``n_bar``.

    Populations follow ``p(n) ~ (n_bar / (1 + n_bar))**n`` and are
    renormalized on the truncated space.
    """
    if not n_bar >= 0:
        raise InvalidArgument(f"n_bar must be non-negative, got {n_bar}")
    n = np.arange(int(n_max) + 1)
    if n_bar == 0:
        p = (n == 0).astype(float)
    else:
        q = n_bar / (1.0 + n_bar)
        p = q**n
        p /= p.sum()
    return Operator(SpaceLabel.motional(n_max), np.diag(p))


def _v_internal(params: ModelParams, coeff) -> np.ndarray:
    """``1/2 sum_j Omega_j c_j |3><j| + h.c.`` for per-laser coefficients."""
    c1, c2 = coeff
    m = 0.5 * (params.omega1 * c1 * dyad(3, 1) + params.omega2 * c2 * dyad(3, 2))
    return m + m.conj().T


def internal_hamiltonian(params: ModelParams, sign: int = DETUNING_SIGN) -> Operator:
    """``H0 + V(0)`` in the frame rotating with the lasers."""
    H = sign * params.delta * (dyad(1, 1) + dyad(2, 2)) + _v_internal(params, (1.0, 1.0))
    return Operator(INTERNAL, H)


def internal_liouvillian(params: ModelParams, sign: int = DETUNING_SIGN) -> SuperOperator:
    """Zero-order internal Liouvillian ``L_I`` (9 x 9)."""
    K0 = lindblad_superop(Operator(INTERNAL, dyad(1, 3)), params.gamma1) + lindblad_superop(
        Operator(INTERNAL, dyad(2, 3)), params.gamma2
    )
    return commutator_superop(internal_hamiltonian(params, sign)) + K0


def emission_quadrature(pattern: str | float, nodes: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Nodes in ``cos(theta)`` and weights for averages over the emission pattern.

    Weights sum to one and already contain the angular distribution. A
    custom ``beta`` is realized by the symmetric two-point distribution at
    ``+-sqrt(beta)``, which reproduces ``beta`` exactly for any value in
    (0, 1]; ``nodes`` is ignored in that case.
    """
    if nodes < 1:
        raise InvalidArgument("need at least one quadrature node")
    if not isinstance(pattern, str):
        b = float(pattern)
        if not 0 < b <= 1:
            raise InvalidArgument(f"custom beta must lie in (0, 1], got {b}")
        r = math.sqrt(b)
        return np.array([-r, r]), np.array([0.5, 0.5])
    u, w = np.polynomial.legendre.leggauss(nodes)
    if pattern == "isotropic":
        return u, 0.5 * w
    if pattern == "dipole":
        return u, w * 3.0 / 8.0 * (1 + u**2)
    raise InvalidArgument(f"unknown pattern {pattern!r}")


# ---------------------------------------------------------------------------
# Lamb-Dicke expansion
# ---------------------------------------------------------------------------


def _commutator_action(H: np.ndarray):
    return lambda X: -1j * (H @ X - X @ H)


@dataclass(frozen=True, eq=False)
class ExpansionOperators:
    """Operators of the Lamb-Dicke expansion of the master equation.

    Internal operators (``D0``, ``V0``, ``V1``, ``V2``) live on the 3-level
    space; ``D1``, ``D2`` and the composite superoperators live on
    ``internal (x) Fock(n_max)`` and act through :meth:`SuperOperator.apply`.
    ``L0 = L_E + L_I`` (``L_I`` lifted to the composite space).
    """

    params: ModelParams
    sign: int
    rho_D: Operator
    D0: Operator
    D1: Operator
    D2: Operator
    V0: Operator
    V1: Operator
    V2: Operator
    K0: SuperOperator
    L_I: SuperOperator
    a: Operator
    a_dag: Operator
    x: Operator
    L_E: SuperOperator = field(repr=False)
    L_I_full: SuperOperator = field(repr=False)
    L0: SuperOperator = field(repr=False)
    L1: SuperOperator = field(repr=False)
    L2: SuperOperator = field(repr=False)
    K2: SuperOperator = field(repr=False)

    @property
    def n_max(self) -> int:
        return self.params.n_max

    @cached_property
    def decomposition(self):
        """Spectral decomposition of ``L_I``."""
        return spectral_decompose(self.L_I)

    def lift(self, internal) -> np.ndarray:
        """``internal (x) 1_E`` as a composite matrix."""
        m = internal.matrix if isinstance(internal, Operator) else internal
        return np.kron(m, np.eye(self.n_max + 1))

    def motional(self, ext) -> np.ndarray:
        """``1_I (x) ext`` as a composite matrix."""
        m = ext.matrix if isinstance(ext, Operator) else ext
        return np.kron(np.eye(3), m)


def build_expansion(params: ModelParams, sign: int = DETUNING_SIGN) -> ExpansionOperators:
    """Assemble every piece of the second-order Lamb-Dicke expansion.

    The recoil term uses ``exp(i k x u) X exp(-i k x u)`` expanded to second
    order and averaged over the emission pattern, which gives
    ``K2 X = beta/2 sum_j gamma_j eta_j^2 |j><3| (2 x X x - x^2 X - X x^2) |3><j|``.
    The first-order recoil term vanishes for any pattern symmetric in
    ``cos(theta)`` and is not built.
    """
    p = params
    M = p.n_max + 1
    comp = SpaceLabel.composite(p.n_max)
    a, a_dag, x = build_fock_operators(p.n_max)
    xm = x.matrix
    x2 = xm @ xm

    c1, c2 = math.cos(p.phi1), math.cos(p.phi2)
    cpsi = math.cos(p.psi)
    V0 = Operator(INTERNAL, _v_internal(p, (1.0, 1.0)))
    V1 = Operator(INTERNAL, _v_internal(p, (-1j * p.eta1 * c1, -1j * p.eta2 * c2)))
    V2 = Operator(INTERNAL, _v_internal(p, (-(p.eta1 * c1) ** 2, -(p.eta2 * c2) ** 2)))

    D0 = Operator(INTERNAL, dyad(1, 3))
    D0c = np.kron(D0.matrix, np.eye(M))
    X = np.kron(np.eye(3), xm)
    X2 = np.kron(np.eye(3), x2)
    D1 = Operator(comp, -1j * p.eta1 * cpsi * X @ D0c)
    D2 = Operator(comp, -0.5 * (p.eta1 * cpsi) ** 2 * X2 @ D0c)

    K0 = lindblad_superop(Operator(INTERNAL, dyad(1, 3)), p.gamma1) + lindblad_superop(
        Operator(INTERNAL, dyad(2, 3)), p.gamma2
    )
    L_I = commutator_superop(internal_hamiltonian(p, sign)) + K0

    I_E = np.eye(M)
    HI = np.kron(internal_hamiltonian(p, sign).matrix, I_E)
    jumps = [
        (np.sqrt(p.gamma1) * np.kron(dyad(1, 3), I_E)),
        (np.sqrt(p.gamma2) * np.kron(dyad(2, 3), I_E)),
    ]
    P3 = np.kron(dyad(3, 3), I_E)
    gam = p.gamma

    def l_internal(Y):
        out = -1j * (HI @ Y - Y @ HI) - 0.5 * gam * (P3 @ Y + Y @ P3)
        for J in jumps:
            out = out + J @ Y @ J.conj().T
        return out

    Hmec = np.kron(np.eye(3), np.diag(np.arange(M, dtype=float)))
    l_ext = _commutator_action(Hmec)

    HV1 = np.kron(V1.matrix, xm)
    HV2 = 0.5 * np.kron(V2.matrix, x2)
    l1 = _commutator_action(HV1)
    beta = p.beta
    recoil = [
        (0.5 * beta * p.gamma1 * p.eta1**2, np.kron(dyad(1, 3), I_E)),
        (0.5 * beta * p.gamma2 * p.eta2**2, np.kron(dyad(2, 3), I_E)),
    ]

    def k2(Y):
        inner = 2 * X @ Y @ X - X2 @ Y - Y @ X2
        out = np.zeros_like(Y)
        for c, J in recoil:
            if c:
                out = out + c * (J @ inner @ J.conj().T)
        return out

    l2_coh = _commutator_action(HV2)

    L_E = SuperOperator(comp, action=l_ext)
    L_I_full = SuperOperator(comp, action=l_internal)
    return ExpansionOperators(
        params=p,
        sign=sign,
        rho_D=dark_state(p),
        D0=D0,
        D1=D1,
        D2=D2,
        V0=V0,
        V1=V1,
        V2=V2,
        K0=K0,
        L_I=L_I,
        a=a,
        a_dag=a_dag,
        x=x,
        L_E=L_E,
        L_I_full=L_I_full,
        L0=SuperOperator(comp, action=lambda Y: l_ext(Y) + l_internal(Y)),
        L1=SuperOperator(comp, action=l1),
        L2=SuperOperator(comp, action=lambda Y: l2_coh(Y) + k2(Y)),
        K2=SuperOperator(comp, action=k2),
    )


# ---------------------------------------------------------------------------
# sign audit
# ---------------------------------------------------------------------------


def detuning_sign_audit(params: ModelParams) -> dict:
    """Compare both light-shift sign conventions of ``H0``.

    For each sign the phonon coefficients are computed from the internal
    resolvent, and the printed closed forms of ``s(nu)`` and ``f(lambda_E)``
    are compared against the resolvent expressions. The convention that
    cools and reproduces the closed forms is reported as ``chosen``.
    """
    from .perturbation import closed_form_s, resolvent_s
    from .spectrum import closed_form_f, trace_formula_f

    report: dict = {"conventions": {}}
    for sign in (+1, -1):
        L_I = internal_liouvillian(params, sign)
        exp = build_expansion(params.with_(n_max=1), sign)
        s_p, s_m = resolvent_s(exp, +1.0), resolvent_s(exp, -1.0)
        A_plus, A_minus = 2 * s_p.real, 2 * s_m.real
        closed = (closed_form_s(params, 1.0), closed_form_s(params, -1.0))
        f_res = (trace_formula_f(exp, 1j), trace_formula_f(exp, -1j))
        f_cl = (closed_form_f(params, 1j), closed_form_f(params, -1j))
        scale_s = max(abs(closed[0]), abs(closed[1]), 1e-300)
        scale_f = max(abs(f_cl[0]), abs(f_cl[1]), 1e-300)
        ev = np.linalg.eigvals(L_I.matrix)
        report["conventions"][sign] = {
            "A_plus": A_plus,
            "A_minus": A_minus,
            "gamma_S": A_minus - A_plus,
            "cooling": bool(A_minus - A_plus > 0),
            "s_closed_form_mismatch": max(abs(s_p - closed[0]), abs(s_m - closed[1])) / scale_s,
            "f_closed_form_mismatch": max(abs(f_res[0] - f_cl[0]), abs(f_res[1] - f_cl[1])) / scale_f,
            "abs_eigenvalues": np.sort(np.abs(ev)),
        }
    c = report["conventions"]
    report["abs_spectra_agree"] = bool(
        np.allclose(c[1]["abs_eigenvalues"], c[-1]["abs_eigenvalues"], atol=1e-9)
    )
    ok = [s for s in (1, -1) if c[s]["cooling"] and c[s]["s_closed_form_mismatch"] < 1e-9]
    report["chosen"] = ok[0] if ok else None
    report["library_sign"] = DETUNING_SIGN
    report["typo_candidates"] = [
        "A_pm = 2 Re s(+-nu) with the printed closed form of s(nu) (adopted)",
        "printed closed form is s(-nu) for the exp(+i nu t) kernel; then A_pm = 2 Re s(-+nu)",
    ]
    return report
