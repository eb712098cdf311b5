"""
Second-order degenerate perturbation theory of the Liouvillian in the
Lamb-Dicke parameter, and the effective phonon dynamics it generates.

The zero-order Liouvillian ``L0 = L_E + L_I`` is a Kronecker sum, so on a
composite operator split into internal blocks ``B_nm = <n| X |m>`` it acts
block-wise as ``L_I - i (n - m)``. Resolvents and projectors of ``L0`` are
therefore evaluated exactly from the 9 x 9 decomposition of ``L_I`` without
ever forming composite superoperator matrices.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import (
    InvalidArgument,
    NumericalFailure,
    Operator,
    SingularResolventError,
    SpaceLabel,
    SpectralDecomposition,
    SuperOperator,
    reduced_resolvent,
    spectral_decompose,
)
from .model import ExpansionOperators, ModelParams, thermal_mu

log = logging.getLogger(__name__)

__all__ = [
    "HeatingRegimeError",
    "PhononCoefficients",
    "PerturbativeState",
    "resolvent_s",
    "closed_form_s",
    "phonon_coefficients",
    "phonon_generator",
    "phonon_effective_eigensystem",
    "EffectiveMode",
    "L0Blocks",
    "projector_corrections",
    "correct_eigenspace",
]


class HeatingRegimeError(RuntimeError):
    """The phonon dynamics does not cool (``gamma_S <= 0``)."""

    def __init__(self, A_plus: float, A_minus: float):
        self.A_plus = float(A_plus)
        self.A_minus = float(A_minus)
        super().__init__(
            f"no cooling: A_+ = {self.A_plus:.6g}, A_- = {self.A_minus:.6g}, "
            f"gamma_S = {self.A_minus - self.A_plus:.6g}"
        )


# ---------------------------------------------------------------------------
# phonon coefficients
# ---------------------------------------------------------------------------


def resolvent_s(exp: ExpansionOperators, nu: float = 1.0) -> complex:
    """Motional spectral density of the first-order coupling.

    ``s(nu) = int_0^inf dt exp(-i nu t) Tr_I{V1 exp(L_I t) V1 rho_D}
    = Tr_I{V1 (i nu - L_I)^{-1} V1 rho_D}``, with the stationary direction
    of ``L_I`` removed (``V1 rho_D`` has no component along it).
    """
    dec = exp.decomposition
    V1, rD = exp.V1.matrix, exp.rho_D.matrix
    src = V1 @ rD
    k0 = dec.stationary_index()
    leak = abs(dec.coefficients(src)[k0])
    if leak > 1e-10 * max(np.linalg.norm(src), 1e-300):
        raise NumericalFailure(f"V1 rho_D has a stationary component {leak:.3g}")
    R = reduced_resolvent(dec, 1j * nu, exclude=[dec.eigenvalues[k0]])
    return complex(np.trace(V1 @ R.apply(src)))


def closed_form_s(params: ModelParams, nu: float = 1.0) -> complex:
    """Closed form of :func:`resolvent_s` for the library sign convention."""
    p = params
    om2 = p.omega_sq
    num = p.eta**2 * 1j * nu * p.omega1**2 * p.omega2**2
    den = om2 * (om2 + 4 * nu * (0.5j * p.gamma - nu + p.delta))
    return complex(num / den)


@dataclass(frozen=True)
class PhononCoefficients:
    """Heating/cooling coefficients of the trapped-atom phonon dynamics.

    ``A_plus``/``A_minus`` multiply the heating/cooling dissipators in the
    phonon master equation; ``gamma_S = A_minus - A_plus`` is the relaxation
    rate of the mean phonon number and ``nu_bar`` the second-order trap
    frequency shift. The sideband half-width measured in the emission
    spectrum is ``gamma_S / 2`` (see :attr:`sideband_halfwidth`).
    """

    s_plus: complex
    s_minus: complex
    A_plus: float
    A_minus: float
    gamma_S: float
    nu_bar: float
    n_bar: float

    @property
    def sideband_halfwidth(self) -> float:
        return 0.5 * self.gamma_S

    def scaled(self, factor: float) -> "PhononCoefficients":
        """Coefficients with ``s`` multiplied by ``factor`` (``n_bar`` unchanged)."""
        return PhononCoefficients(
            self.s_plus * factor,
            self.s_minus * factor,
            self.A_plus * factor,
            self.A_minus * factor,
            self.gamma_S * factor,
            self.nu_bar * factor,
            self.n_bar,
        )

    def as_dict(self) -> dict:
        return {
            "s_plus": [self.s_plus.real, self.s_plus.imag],
            "s_minus": [self.s_minus.real, self.s_minus.imag],
            "A_plus": self.A_plus,
            "A_minus": self.A_minus,
            "gamma_S": self.gamma_S,
            "nu_bar": self.nu_bar,
            "n_bar": self.n_bar,
        }


def phonon_coefficients(
    exp: ExpansionOperators,
    params: ModelParams | None = None,
    rtol: float = 1e-9,
    allow_heating: bool = False,
) -> PhononCoefficients:
    """Evaluate ``s(+-nu)``, ``A_+-``, ``gamma_S``, ``nu_bar`` and ``<n>``.

    ``s`` is computed from the internal resolvent and from the closed form;
    the two must agree to ``rtol``. ``A_+- = 2 Re s(+-nu)``.

    Raises
    ------
    HeatingRegimeError
        If ``gamma_S <= 0`` and ``allow_heating`` is false.
    """
    params = exp.params if params is None else params
    s_p, s_m = resolvent_s(exp, 1.0), resolvent_s(exp, -1.0)
    c_p, c_m = closed_form_s(params, 1.0), closed_form_s(params, -1.0)
    scale = max(abs(c_p), abs(c_m))
    if scale > 0:
        err = max(abs(s_p - c_p), abs(s_m - c_m)) / scale
        if err > rtol:
            raise NumericalFailure(
                f"resolvent and closed-form s(nu) disagree: relative error {err:.3g}"
            )
    elif max(abs(s_p), abs(s_m)) > 1e-14:
        raise NumericalFailure("closed form vanishes but resolvent s(nu) does not")
    A_plus, A_minus = 2 * s_p.real, 2 * s_m.real
    gamma_S = A_minus - A_plus
    if gamma_S <= 0 and not allow_heating:
        raise HeatingRegimeError(A_plus, A_minus)
    n_bar = A_plus / gamma_S if gamma_S != 0 else float("inf")
    return PhononCoefficients(
        s_plus=s_p,
        s_minus=s_m,
        A_plus=A_plus,
        A_minus=A_minus,
        gamma_S=gamma_S,
        nu_bar=s_p.imag + s_m.imag,
        n_bar=n_bar,
    )


# ---------------------------------------------------------------------------
# effective phonon master equation
# ---------------------------------------------------------------------------


def phonon_generator(coeffs: PhononCoefficients, n_max: int) -> SuperOperator:
    """Damped-oscillator generator on the truncated Fock space.

    ``mu -> -i nu_bar [a^+ a, mu] + A_- D[a] mu + A_+ D[a^+] mu`` with
    ``D[c] mu = 2 c mu c^+ - c^+ c mu - mu c^+ c``. The returned map is
    action-based; its dense matrix is built only on request.
    """
    n_max = int(n_max)
    if n_max < 1:
        raise InvalidArgument("n_max must be >= 1")
    a = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1)
    ad = a.T
    num = ad @ a
    aad = a @ ad
    nb, Am, Ap = coeffs.nu_bar, coeffs.A_minus, coeffs.A_plus

    def act(mu):
        return (
            -1j * nb * (num @ mu - mu @ num)
            + Am * (2 * a @ mu @ ad - num @ mu - mu @ num)
            + Ap * (2 * ad @ mu @ a - aad @ mu - mu @ aad)
        )

    return SuperOperator(SpaceLabel.motional(n_max), action=act)


@dataclass(frozen=True, eq=False)
class EffectiveMode:
    """One eigenmode of the phonon generator.

    ``ell`` counts the Fock offset of the right eigen-operator,
    ``sum_n c_n |n + ell><n|``, so its closed-form eigenvalue is
    ``-i ell nu_bar - (2N + |ell|) gamma_S``.
    """

    N: int
    ell: int
    eigenvalue: complex
    closed_form: complex
    right: Operator
    left: Operator


def _sector_basis(M: int, ell: int) -> list[tuple[int, int]]:
    # right eigen-operators of sector ell are built from |j + ell><j|
    return [(j + ell, j) for j in range(M) if 0 <= j + ell < M]


def _sector_modes(coeffs: PhononCoefficients, n_max: int, ell: int, count: int):
    G = phonon_generator(coeffs, n_max)
    M = n_max + 1
    basis = _sector_basis(M, ell)
    rows = np.array([b[0] for b in basis])
    cols = np.array([b[1] for b in basis])
    block = np.empty((len(basis), len(basis)), complex)
    for k, (i, j) in enumerate(basis):
        E = np.zeros((M, M), complex)
        E[i, j] = 1.0
        block[:, k] = G.apply(E)[rows, cols]
    w, R = np.linalg.eig(block)
    order = np.argsort(-w.real)
    w, R = w[order], R[:, order]
    Linv = np.linalg.inv(R)
    return basis, w[:count], R[:, :count], Linv[:count, :]


def phonon_effective_eigensystem(
    coeffs: PhononCoefficients,
    n_max: int,
    N_list: Iterable[int] = (0,),
    l_list: Iterable[int] = (0,),
    rtol: float = 1e-8,
) -> list[EffectiveMode]:
    """Diagonalize the phonon generator and label modes by ``(N, ell)``.

    Numerical eigenvalues are sorted by decay rate inside each ``ell``
    sector and compared with the closed form at ``n_max`` and at
    ``2 n_max``; both must agree within ``rtol * gamma_S``.

    Raises
    ------
    HeatingRegimeError
        Outside the cooling regime.
    NumericalFailure
        If the truncation has not converged.
    """
    if coeffs.gamma_S <= 0:
        raise HeatingRegimeError(coeffs.A_plus, coeffs.A_minus)
    N_list, l_list = sorted(set(N_list)), sorted(set(l_list))
    n_max = int(n_max)
    M = n_max + 1
    scale = rtol * max(abs(coeffs.gamma_S), abs(coeffs.nu_bar))
    out = []
    for ell in l_list:
        count = max(N_list) + 1
        if M - abs(ell) < count:
            raise NumericalFailure(f"n_max={n_max} too small for N={max(N_list)}, ell={ell}")
        basis, w, R, Linv = _sector_modes(coeffs, n_max, ell, count)
        _, w2, _, _ = _sector_modes(coeffs, 2 * n_max, ell, count)
        for N in N_list:
            closed = -1j * ell * coeffs.nu_bar - (2 * N + abs(ell)) * coeffs.gamma_S
            if abs(w[N] - w2[N]) > scale or abs(w[N] - closed) > scale:
                raise NumericalFailure(
                    f"mode (N={N}, ell={ell}) not converged at n_max={n_max}: "
                    f"{w[N]:.12g} vs {w2[N]:.12g} (2 n_max) vs closed form {closed:.12g}; "
                    "increase n_max"
                )
            right = np.zeros((M, M), complex)
            left = np.zeros((M, M), complex)
            for k, (i, j) in enumerate(basis):
                right[i, j] = R[k, N]
                left[j, i] = Linv[N, k]
            if N == 0 and ell == 0:
                t = np.trace(right)
                right, left = right / t, left * t
            space = SpaceLabel.motional(n_max)
            out.append(EffectiveMode(N, ell, complex(w[N]), complex(closed),
                                     Operator(space, right), Operator(space, left)))
    return out


# ---------------------------------------------------------------------------
# structured zero-order maps on the composite space
# ---------------------------------------------------------------------------


class L0Blocks:
    """Exact functions of ``L0 = L_E + L_I`` on composite operators.

    A composite operator is viewed as internal blocks ``B_nm``; block
    ``(n, m)`` of internal eigenmode ``k`` has ``L0`` eigenvalue
    ``lambda_k + i (m - n)``.
    """

    def __init__(self, dec: SpectralDecomposition, n_max: int):
        self.dec = dec
        self.M = int(n_max) + 1
        self.tol = dec.grouping_tol
        self.R = np.array([r.matrix for r in dec.right])  # (9, 3, 3)
        self.Lt = np.array([l.matrix for l in dec.left])
        n = np.arange(self.M)
        self.ell = n[None, :] - n[:, None]  # ell[n, m] = m - n
        self.eig = dec.eigenvalues[:, None, None] + 1j * self.ell[None, :, :]

    def _blocks(self, X):
        return np.asarray(X).reshape(3, self.M, 3, self.M)

    def coefficients(self, X) -> np.ndarray:
        """``c[k, n, m] = Tr{l_k B_nm}``."""
        return np.einsum("kji,injm->knm", self.Lt, self._blocks(X))

    def synthesize(self, c) -> np.ndarray:
        T = np.einsum("kij,knm->injm", self.R, c)
        return T.reshape(3 * self.M, 3 * self.M)

    def left_coefficients(self, Y) -> np.ndarray:
        """``c[k, n, m] = Tr{Y (r_k (x) |n><m|)}``."""
        Yb = self._blocks(Y)  # Y[j, m, i, n] pairs with r_k[i, j] |n><m|
        return np.einsum("kij,jmin->knm", self.R, Yb)

    def left_synthesize(self, c) -> np.ndarray:
        # sum_k c l_k (x) |m><n|
        T = np.einsum("kij,knm->imjn", self.Lt, c)
        return T.reshape(3 * self.M, 3 * self.M)

    def in_group(self, lam: complex) -> np.ndarray:
        return np.abs(self.eig - lam) < self.tol

    def factors(self, z: complex, exclude: Sequence[complex] = ()) -> np.ndarray:
        keep = np.ones(self.eig.shape, bool)
        for e in exclude:
            keep &= ~self.in_group(e)
        close = keep & (np.abs(self.eig - z) < self.tol)
        if np.any(close):
            raise SingularResolventError(z, self.eig[close])
        F = np.zeros(self.eig.shape, complex)
        F[keep] = 1.0 / (z - self.eig[keep])
        return F

    def resolvent(self, z: complex, exclude: Sequence[complex] = ()) -> Callable:
        """``X -> (1 - P_excl) (z - L0)^{-1} X``."""
        F = self.factors(z, exclude)
        return lambda X: self.synthesize(F * self.coefficients(X))

    def left_resolvent(self, z: complex, exclude: Sequence[complex] = ()) -> Callable:
        """Left action ``Y -> Y (1 - P_excl) (z - L0)^{-1}``."""
        F = self.factors(z, exclude)
        return lambda Y: self.left_synthesize(F * self.left_coefficients(Y))

    def projector(self, lam: complex) -> Callable:
        mask = self.in_group(lam).astype(float)
        return lambda X: self.synthesize(mask * self.coefficients(X))


def _left_commutator(H: np.ndarray):
    # Tr{Y (-i)[H, X]} = Tr{(-i)(Y H - H Y) X}
    return lambda Y: -1j * (Y @ H - H @ Y)


def _left_L1(exp: ExpansionOperators):
    H = np.kron(exp.V1.matrix, exp.x.matrix)
    return _left_commutator(H)


def _left_L2(exp: ExpansionOperators):
    p = exp.params
    M = p.n_max + 1
    xm = exp.x.matrix
    X = np.kron(np.eye(3), xm)
    X2 = X @ X
    H = 0.5 * np.kron(exp.V2.matrix, xm @ xm)
    coh = _left_commutator(H)
    recoil = []
    for gam, eta, j in ((p.gamma1, p.eta1, 0), (p.gamma2, p.eta2, 1)):
        c = 0.5 * p.beta * gam * eta**2
        if c:
            Jm = np.zeros((3, 3))
            Jm[j, 2] = 1.0
            recoil.append((c, np.kron(Jm, np.eye(M))))

    def left(Y):
        out = coh(Y)
        for c, J in recoil:
            Z = J.conj().T @ Y @ J
            out = out + c * (2 * X @ Z @ X - Z @ X2 - X2 @ Z)
        return out

    return left


def projector_corrections(
    exp: ExpansionOperators, lambda0: complex, blocks: L0Blocks | None = None
) -> tuple[Callable, Callable]:
    """Zero-order group projector ``P0`` and its first-order correction.

    ``P1 = R L1 P0 + P0 L1 R`` with ``R = (1 - P0)(lambda0 - L0)^{-1}``.
    """
    blk = blocks if blocks is not None else L0Blocks(exp.decomposition, exp.n_max)
    P0 = blk.projector(lambda0)
    R = blk.resolvent(lambda0, exclude=[lambda0])
    L1 = exp.L1.apply

    def P1(X):
        return R(L1(P0(X))) + P0(L1(R(X)))

    return P0, P1


@dataclass(frozen=True, eq=False)
class PerturbativeState:
    """Second-order corrections for one zero-order eigenvalue group.

    ``rho0``/``check_rho0`` are the zero-order eigen-elements selected by
    the second-order secular problem (the slowest one, N = 0), ``rho1``,
    ``rho2``, ``check_rho1`` their corrections. ``P0`` and ``P1`` act on
    composite arrays and are the zero-order projector onto the whole group
    and its first-order correction. ``lambda2_all`` holds every second-order
    shift inside the group.
    """

    lambda0: complex
    lambda1: complex
    lambda2: complex
    rho0: Operator
    rho1: Operator
    rho2: Operator
    check_rho0: Operator
    check_rho1: Operator
    P0: Callable[[np.ndarray], np.ndarray]
    P1: Callable[[np.ndarray], np.ndarray]
    lambda2_all: np.ndarray
    first_order_block: float


def correct_eigenspace(
    exp: ExpansionOperators,
    lambda0: complex = 0.0,
    mode: int = 0,
    secular: bool | None = None,
) -> PerturbativeState:
    """Degenerate perturbation theory around a zero-order eigenvalue.

    The group of zero-order eigenvalues within ``grouping_tol`` of
    ``lambda0`` is the degenerate space. Its first-order block
    ``P0 L1 P0`` is checked to vanish; the second-order block
    ``P0 (L2 + L1 R L1) P0`` with ``R = (1 - P0)(lambda0 - L0)^{-1}`` fixes
    the zero-order eigen-elements and their shifts ``lambda2``. ``mode``
    picks the eigen-element by decreasing real part of ``lambda2``.

    For the stationary mode (``lambda0 = 0``, ``mode = 0``) the secular
    problem has the known solution ``rho_D (x) mu`` with ``mu`` thermal at
    ``n_bar = A_+ / gamma_S`` and the identity as its dual. That shortcut is
    used unless ``secular=True``; the diagonalization costs ``O(n_max)``
    Liouvillian applications and is what the shortcut is tested against.

    Corrections follow
    ``rho1 = R L1 rho0`` and ``rho2 = R (L1 rho1 + L2 rho0)`` with no
    component inside the degenerate space (so ``Tr{rho1} = Tr{rho2} = 0``
    at ``lambda0 = 0``), and ``check_rho1 = check_rho0 L1 R``.

    Raises
    ------
    SingularResolventError
        If the resolvent hits an eigenvalue outside the group.
    NumericalFailure
        If ``lambda1`` does not vanish.
    """
    dec = exp.decomposition
    blk = L0Blocks(dec, exp.n_max)
    comp = SpaceLabel.composite(exp.n_max)
    mask = blk.in_group(lambda0)
    members = np.argwhere(mask)
    if len(members) == 0:
        raise InvalidArgument(f"{lambda0} is not a zero-order eigenvalue")
    R = blk.resolvent(lambda0, exclude=[lambda0])
    Rl = blk.left_resolvent(lambda0, exclude=[lambda0])
    L1, L2 = exp.L1.apply, exp.L2.apply
    lL1 = _left_L1(exp)

    def trs(Y, X):
        return np.einsum("ij,ji->", Y, X)

    if secular is None:
        secular = not (abs(lambda0) < dec.grouping_tol and mode == 0)
    if secular:
        # basis of the degenerate space and its dual
        basis, dual = [], []
        for k, n, m in members:
            c = np.zeros(blk.eig.shape, complex)
            c[k, n, m] = 1.0
            basis.append(blk.synthesize(c))
            dual.append(blk.left_synthesize(c))
        basis, dual = np.array(basis), np.array(dual)
        L1b = [L1(b) for b in basis]
        V = np.array([[trs(d, y) for y in L1b] for d in dual])
        W = np.array(
            [[trs(d, L2(b) + L1(R(y))) for b, y in zip(basis, L1b)] for d in dual]
        )
        scale = max(np.max(np.abs(W)), 1e-300)
        first = float(np.max(np.abs(V))) if V.size else 0.0
        if first > 1e-8 * max(1.0, np.sqrt(scale)):
            raise NumericalFailure(
                f"first-order block P0 L1 P0 does not vanish ({first:.3g})"
            )
        w2, C = np.linalg.eig(W)
        order = np.argsort(-w2.real)
        w2, C = w2[order], C[:, order]
        Cinv = np.linalg.inv(C)
        rho0 = np.tensordot(C[:, mode], basis, axes=1)
        check0 = np.tensordot(Cinv[mode, :], dual, axes=1)
        t = np.trace(rho0)
        if abs(t) > 1e-12:
            rho0, check0 = rho0 / t, check0 * t
        lam2 = w2[mode]
    else:
        coeffs = phonon_coefficients(exp)
        mu = thermal_mu(coeffs.n_bar, exp.n_max).matrix
        rho0 = np.kron(exp.rho_D.matrix, mu).astype(complex)
        check0 = np.eye(rho0.shape[0], dtype=complex)
        w2 = np.zeros(1, complex)
        lam2 = 0.0
        first = 0.0
    lam1 = trs(check0, L1(rho0))
    if abs(lam1) > 1e-10 * max(1.0, abs(lam2)):
        raise NumericalFailure(f"lambda1 = {lam1:.3g} does not vanish")

    rho1 = R(L1(rho0))
    rho2 = R(L1(rho1) + L2(rho0))
    check1 = Rl(lL1(check0))

    P0, P1 = projector_corrections(exp, lambda0, blk)
    return PerturbativeState(
        lambda0=complex(lambda0),
        lambda1=complex(lam1),
        lambda2=complex(lam2),
        rho0=Operator(comp, rho0),
        rho1=Operator(comp, rho1),
        rho2=Operator(comp, rho2),
        check_rho0=Operator(comp, check0),
        check_rho1=Operator(comp, check1),
        P0=P0,
        P1=P1,
        lambda2_all=w2,
        first_order_block=first,
    )
