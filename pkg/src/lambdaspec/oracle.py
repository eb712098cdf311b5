"""
Brute-force reference: the full master equation on a truncated Fock space.

No Lamb-Dicke expansion is made. The laser coupling carries the exact
operator exponentials ``exp(-+ i eta_j cos(phi_j) x)``, spontaneous
emission carries the recoil ``exp(i eta_j u x)`` averaged over the emission
direction ``u = cos(theta)`` with Gauss-Legendre quadrature, and the
spectrum is obtained from the quantum regression theorem by one dense
linear solve per frequency.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as la
from scipy.optimize import curve_fit

from .core import (
    InvalidArgument,
    NumericalFailure,
    Operator,
    SpaceLabel,
    SuperOperator,
    build_fock_operators,
    spost,
    spre,
    sprepost,
    unvec,
    vec,
)
from .model import DETUNING_SIGN, ModelParams, dyad, emission_quadrature

log = logging.getLogger(__name__)

__all__ = [
    "SteadyStateDegeneracyError",
    "FullLiouvillian",
    "OracleSpectrum",
    "build_full_liouvillian",
    "steady_state",
    "oracle_spectrum",
    "LorentzianFit",
    "fit_lorentzian",
]


class SteadyStateDegeneracyError(NumericalFailure):
    """The full Liouvillian does not have a one-dimensional null space."""


@dataclass(frozen=True, eq=False)
class FullLiouvillian:
    """Dense generator of the full master equation.

    ``quadrature`` holds the ``(cos(theta), weight)`` pairs used for the
    recoil average; the weights include the emission pattern and sum to one.
    """

    L: SuperOperator
    quadrature: tuple[tuple[float, float], ...]
    params: ModelParams
    x: np.ndarray = field(repr=False)
    sign: int = DETUNING_SIGN

    @property
    def dim(self) -> int:
        return self.L.space.dim


def build_full_liouvillian(
    params: ModelParams, quadrature_nodes: int = 16, sign: int = DETUNING_SIGN
) -> FullLiouvillian:
    """Assemble the full Liouvillian on ``internal (x) Fock(n_max)``."""
    if quadrature_nodes < 1:
        raise InvalidArgument("quadrature_nodes must be >= 1")
    p = params
    M = p.n_max + 1
    _, _, x = build_fock_operators(p.n_max)
    xm = x.matrix
    I_E = np.eye(M)
    H = np.kron(sign * p.delta * (dyad(1, 1) + dyad(2, 2)), I_E)
    H = H + np.kron(np.eye(3), np.diag(np.arange(M, dtype=float)))
    for om, eta, phi, j in ((p.omega1, p.eta1, p.phi1, 1), (p.omega2, p.eta2, p.phi2, 2)):
        E = la.expm(-1j * eta * math.cos(phi) * xm)
        T = 0.5 * om * np.kron(dyad(3, j), E)
        H = H + T + T.conj().T
    L = -1j * (spre(H) - spost(H))
    P3 = np.kron(dyad(3, 3), I_E)
    L += -0.5 * p.gamma * (spre(P3) + spost(P3))
    u, w = emission_quadrature(p.pattern, quadrature_nodes)
    for gam, eta, j in ((p.gamma1, p.eta1, 1), (p.gamma2, p.eta2, 2)):
        if gam == 0:
            continue
        for uu, ww in zip(u, w):
            J = np.kron(dyad(j, 3), la.expm(1j * eta * uu * xm))
            L += gam * ww * sprepost(J, J.conj().T)
    space = SpaceLabel.composite(p.n_max)
    return FullLiouvillian(
        L=SuperOperator(space, L),
        quadrature=tuple((float(a), float(b)) for a, b in zip(u, w)),
        params=p,
        x=xm,
        sign=sign,
    )


def steady_state(full: FullLiouvillian, rtol: float = 1e-10) -> Operator:
    """Unit-trace null vector of the full Liouvillian.

    The null space is read off the singular value decomposition; a
    singular value below ``rtol * ||L||`` counts as a null direction.

    Raises
    ------
    SteadyStateDegeneracyError
        If the null space is not one-dimensional.
    """
    A = full.L.matrix
    _, s, Vh = la.svd(A)
    thresh = rtol * s[0]
    null = int(np.sum(s < thresh))
    if null != 1:
        raise SteadyStateDegeneracyError(
            f"null space of the full Liouvillian has dimension {null} "
            f"(smallest singular values {s[-3:]})"
        )
    d = full.dim
    rho = unvec(Vh[-1].conj(), d)
    rho = rho / np.trace(rho)
    rho = 0.5 * (rho + rho.conj().T)
    ev = np.linalg.eigvalsh(rho)
    if ev.min() < -1e-10:
        log.warning("steady state has a negative eigenvalue %.3g", ev.min())
    M = full.params.n_max + 1
    top = float(np.real(sum(rho[i * M + M - 1, i * M + M - 1] for i in range(3))))
    if top > 1e-6:
        log.warning(
            "population %.3g in the highest Fock state; increase n_max", top
        )
    return Operator(full.L.space, rho)


@dataclass(frozen=True, eq=False)
class OracleSpectrum:
    """Reference spectrum with the elastic weight kept separate.

    ``errors`` maps grid indices whose solve failed to a message; those
    entries of ``S`` are NaN. ``top_population`` is the steady-state
    population of the highest Fock state kept.
    """

    omega: np.ndarray
    S: np.ndarray
    elastic_weight: float
    top_population: float
    errors: dict = field(default_factory=dict)

    @property
    def truncation_warning(self) -> bool:
        return self.top_population > 1e-6


def oracle_spectrum(
    full: FullLiouvillian,
    rho_st: Operator,
    omega_grid: Sequence[float],
    psi: float | None = None,
    workers: int = 1,
) -> OracleSpectrum:
    """Spectrum ``Re Tr{D^+ (i omega - L)^{-1} Q D rho_st}`` per grid point.

    ``D = exp(-i eta_1 cos(psi) x) |1><3|`` and ``Q`` removes the
    stationary component; the solve uses ``i omega - L + |rho_st>><1|``,
    which is invertible also at ``omega = 0`` and agrees with
    ``i omega - L`` on traceless operators.
    """
    p = full.params
    psi = p.psi if psi is None else psi
    M = p.n_max + 1
    d = full.dim
    D = np.kron(dyad(1, 3), la.expm(-1j * p.eta1 * math.cos(psi) * full.x))
    rho = rho_st.matrix
    src = D @ rho
    amp = np.trace(D.conj().T @ rho)
    src = src - rho * np.trace(src)
    deflate = np.outer(vec(rho), vec(np.eye(d)))
    A0 = deflate - full.L.matrix
    b = vec(src)
    Dd = vec(D.conj())  # Tr{D^+ X} = sum conj(D)_ij X_ij
    omega = np.asarray(omega_grid, dtype=float)
    n2 = d * d

    def solve(w):
        A = A0.copy()
        A[np.diag_indices(n2)] += 1j * w
        X = la.solve(A, b, check_finite=False)
        return float(np.real(Dd @ X))

    S = np.full(omega.shape, np.nan)
    errors = {}

    def run(i):
        try:
            return i, solve(omega[i]), None
        except (la.LinAlgError, ValueError) as exc:
            return i, math.nan, str(exc)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(run, range(omega.size)))
    else:
        results = [run(i) for i in range(omega.size)]
    for i, val, err in results:
        S[i] = val
        if err is not None:
            errors[i] = err
    top = float(np.real(sum(rho[k * M + M - 1, k * M + M - 1] for k in range(3))))
    return OracleSpectrum(omega, S, float(abs(amp) ** 2), top, errors)


@dataclass(frozen=True)
class LorentzianFit:
    center: float
    halfwidth: float
    height: float
    offset: float


def _lorentz(w, c, g, h, b):
    return h * g * g / ((w - c) ** 2 + g * g) + b


def fit_lorentzian(omega, S, center: float, halfwidth: float) -> LorentzianFit:
    """Least-squares Lorentzian plus constant background."""
    omega, S = np.asarray(omega, float), np.asarray(S, float)
    ok = np.isfinite(S)
    h0 = float(np.nanmax(S) - np.nanmin(S))
    popt, _ = curve_fit(
        _lorentz, omega[ok], S[ok], p0=[center, halfwidth, h0, float(np.nanmin(S))],
        maxfev=20000,
    )
    c, g, h, b = popt
    return LorentzianFit(float(c), float(abs(g)), float(h), float(b))
