"""
Dense operator and superoperator algebra for the internal (3 levels) and
motional (truncated Fock) spaces of a trapped atom.

Superoperators act on operators flattened by column stacking,
``vec(X) = X.reshape(-1, order="F")``, so that

    vec(A X B) = (B^T kron A) vec(X).

Every module in the package uses this convention. Units are hbar = 1,
trap frequency nu = 1 and oscillator length x0 = sqrt(hbar / 2 M nu) = 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as la

__all__ = [
    "InvalidArgument",
    "NumericalFailure",
    "SingularResolventError",
    "DefectiveSpectrumError",
    "SpaceKind",
    "SpaceLabel",
    "Operator",
    "SuperOperator",
    "SpectralDecomposition",
    "vec",
    "unvec",
    "spre",
    "spost",
    "sprepost",
    "build_fock_operators",
    "commutator_superop",
    "lindblad_superop",
    "spectral_decompose",
    "reduced_resolvent",
]


class InvalidArgument(ValueError):
    """Raised for arguments outside an operation's domain."""


class NumericalFailure(RuntimeError):
    """Raised when a numerical routine cannot deliver a trustworthy result."""


class SingularResolventError(NumericalFailure):
    """The resolvent point collides with a non-excluded eigenvalue."""

    def __init__(self, z, colliding, context: str = ""):
        self.z = complex(z)
        self.colliding = [complex(c) for c in colliding]
        self.context = context
        msg = (
            f"resolvent at z={self.z:.6g} is singular: eigenvalue(s) "
            f"{', '.join(f'{c:.6g}' for c in self.colliding)} not excluded"
        )
        super().__init__(f"{msg} ({context})" if context else msg)


class DefectiveSpectrumError(NumericalFailure):
    """The superoperator is not diagonalizable within tolerance."""


# ---------------------------------------------------------------------------
# spaces and operators
# ---------------------------------------------------------------------------


class SpaceKind(enum.Enum):
    INTERNAL = "internal"
    MOTIONAL = "motional"
    COMPOSITE = "composite"


@dataclass(frozen=True)
class SpaceLabel:
    """Hilbert space tag. Composite spaces are ordered internal (x) motional."""

    kind: SpaceKind
    n_max: int | None = None

    def __post_init__(self):
        if self.kind is SpaceKind.INTERNAL:
            if self.n_max is not None:
                raise InvalidArgument("internal space takes no Fock cutoff")
        elif self.n_max is None or self.n_max < 0:
            raise InvalidArgument(f"{self.kind.value} space needs n_max >= 0")

    @classmethod
    def internal(cls) -> "SpaceLabel":
        return cls(SpaceKind.INTERNAL)

    @classmethod
    def motional(cls, n_max: int) -> "SpaceLabel":
        return cls(SpaceKind.MOTIONAL, int(n_max))

    @classmethod
    def composite(cls, n_max: int) -> "SpaceLabel":
        return cls(SpaceKind.COMPOSITE, int(n_max))

    @property
    def dim(self) -> int:
        if self.kind is SpaceKind.INTERNAL:
            return 3
        if self.kind is SpaceKind.MOTIONAL:
            return self.n_max + 1
        return 3 * (self.n_max + 1)


INTERNAL = SpaceLabel.internal()


@dataclass(frozen=True, eq=False)
class Operator:
    """A square complex matrix tagged with the space it acts on."""

    space: SpaceLabel
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        d = self.space.dim
        if m.shape != (d, d):
            raise InvalidArgument(
                f"matrix shape {m.shape} does not match {self.space.kind.value} "
                f"dimension {d}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.space.dim

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def tr(self) -> complex:
        return complex(np.trace(self.matrix))

    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix))

    def _check(self, other: "Operator"):
        if other.space != self.space:
            raise InvalidArgument(f"space mismatch: {self.space} vs {other.space}")

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self.matrix @ other.matrix)
        return NotImplemented

    def __add__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self.matrix + other.matrix)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self.matrix - other.matrix)
        return NotImplemented

    def __neg__(self):
        return Operator(self.space, -self.matrix)

    def __mul__(self, c):
        if np.isscalar(c):
            return Operator(self.space, c * self.matrix)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, c):
        return Operator(self.space, self.matrix / c)

    def kron(self, other: "Operator") -> "Operator":
        """Internal (x) motional product."""
        if self.space.kind is not SpaceKind.INTERNAL or other.space.kind is not SpaceKind.MOTIONAL:
            raise InvalidArgument("kron expects an internal then a motional operator")
        return Operator(
            SpaceLabel.composite(other.space.n_max), np.kron(self.matrix, other.matrix)
        )

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.conj().T, atol=atol, rtol=0))

    def __repr__(self):
        return f"Operator({self.space.kind.value}, dim={self.dim})"


def _mat(x) -> np.ndarray:
    return x.matrix if isinstance(x, Operator) else np.asarray(x, dtype=complex)


def vec(X) -> np.ndarray:
    """Column-stack an operator into a vector."""
    return _mat(X).reshape(-1, order="F")


def unvec(v: np.ndarray, d: int | None = None) -> np.ndarray:
    """Inverse of :func:`vec`."""
    v = np.asarray(v)
    if d is None:
        d = int(round(np.sqrt(v.size)))
    return v.reshape(d, d, order="F")


def spre(A) -> np.ndarray:
    """Matrix of X -> A X."""
    A = _mat(A)
    return np.kron(np.eye(A.shape[0]), A)


def spost(A) -> np.ndarray:
    """Matrix of X -> X A."""
    A = _mat(A)
    return np.kron(A.T, np.eye(A.shape[0]))


def sprepost(A, B) -> np.ndarray:
    """Matrix of X -> A X B."""
    return np.kron(_mat(B).T, _mat(A))


class SuperOperator:
    """Linear map on operators of one space.

    Either a dense ``(d**2, d**2)`` matrix in the column-stacking convention
    is given, or a callable ``action`` acting on ``(d, d)`` arrays. In the
    second case the dense matrix is assembled on first access, which is only
    sensible for small spaces; composite-space maps in this package are used
    through :meth:`apply` and never densified unless a test asks for it.
    """

    def __init__(
        self,
        space: SpaceLabel,
        matrix: np.ndarray | None = None,
        action: Callable[[np.ndarray], np.ndarray] | None = None,
    ):
        if (matrix is None) == (action is None):
            raise InvalidArgument("give exactly one of matrix or action")
        self.space = space
        self._action = action
        if matrix is not None:
            m = np.array(matrix, dtype=complex)
            d2 = space.dim**2
            if m.shape != (d2, d2):
                raise InvalidArgument(f"superoperator shape {m.shape} != {(d2, d2)}")
            m.setflags(write=False)
            self.__dict__["matrix"] = m

    @cached_property
    def matrix(self) -> np.ndarray:
        d = self.space.dim
        cols = np.empty((d * d, d * d), dtype=complex)
        E = np.zeros((d, d), dtype=complex)
        for k in range(d * d):
            j, i = divmod(k, d)
            E[i, j] = 1.0
            cols[:, k] = vec(self._action(E))
            E[i, j] = 0.0
        cols.setflags(write=False)
        return cols

    @property
    def is_dense(self) -> bool:
        return "matrix" in self.__dict__

    def apply(self, X) -> np.ndarray:
        X = _mat(X)
        if self.is_dense:
            return unvec(self.matrix @ vec(X), self.space.dim)
        return self._action(X)

    def __call__(self, X):
        if isinstance(X, Operator):
            return Operator(self.space, self.apply(X))
        return self.apply(X)

    def _combine(self, other, sign):
        if not isinstance(other, SuperOperator):
            return NotImplemented
        if other.space != self.space:
            raise InvalidArgument("space mismatch")
        if self.is_dense and other.is_dense:
            return SuperOperator(self.space, self.matrix + sign * other.matrix)
        f, g = self.apply, other.apply
        return SuperOperator(self.space, action=lambda X: f(X) + sign * g(X))

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        if self.is_dense:
            return SuperOperator(self.space, c * self.matrix)
        f = self.apply
        return SuperOperator(self.space, action=lambda X: c * f(X))

    __rmul__ = __mul__

    @classmethod
    def zero(cls, space: SpaceLabel) -> "SuperOperator":
        return cls(space, np.zeros((space.dim**2, space.dim**2)))

    def __repr__(self):
        kind = "dense" if self.is_dense else "action"
        return f"SuperOperator({self.space.kind.value}, dim={self.space.dim}, {kind})"


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def build_fock_operators(n_max: int) -> tuple[Operator, Operator, Operator]:
    """Ladder and position operators on the Fock space truncated at ``n_max``.

    Returns ``(a, a_dag, x)`` with ``x = a + a_dag`` in units of x0. The
    truncation drops the ``|n_max + 1>`` row of ``a_dag``, so
    ``[a, a_dag]`` differs from the identity in its last diagonal entry.
    """
    if int(n_max) != n_max or n_max < 1:
        raise InvalidArgument(f"n_max must be an integer >= 1, got {n_max!r}")
    n_max = int(n_max)
    space = SpaceLabel.motional(n_max)
    a = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1)
    a_dag = a.T.copy()
    return Operator(space, a), Operator(space, a_dag), Operator(space, a + a_dag)


def commutator_superop(H: Operator) -> SuperOperator:
    """The coherent part ``X -> -i [H, X]``."""
    if not isinstance(H, Operator):
        raise InvalidArgument("H must be an Operator")
    return SuperOperator(H.space, -1j * (spre(H) - spost(H)))


def lindblad_superop(jump: Operator, rate: float) -> SuperOperator:
    """``X -> rate/2 (2 J X J^+ - J^+ J X - X J^+ J)``."""
    if rate < 0:
        raise InvalidArgument(f"rate must be non-negative, got {rate}")
    J = jump.matrix
    JdJ = J.conj().T @ J
    m = 0.5 * rate * (2 * sprepost(J, J.conj().T) - spre(JdJ) - spost(JdJ))
    return SuperOperator(jump.space, m)


# ---------------------------------------------------------------------------
# spectral decomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenvalues with biorthonormal right/left eigen-operators.

    ``right[k]`` solves ``L r = lambda_k r``; ``left[k]`` satisfies
    ``Tr{left[k] L X} = lambda_k Tr{left[k] X}``; and
    ``Tr{left[j] right[k]} = delta_jk``. ``groups`` lists index sets of
    eigenvalues closer than ``grouping_tol``.
    """

    space: SpaceLabel
    eigenvalues: np.ndarray
    right: tuple[Operator, ...]
    left: tuple[Operator, ...]
    grouping_tol: float
    groups: tuple[tuple[int, ...], ...] = field(default=())

    # dense helpers, rows of `_L` are vec(left^T) so that Tr{l X} = _L @ vec(X)
    @cached_property
    def _R(self) -> np.ndarray:
        return np.column_stack([vec(r) for r in self.right])

    @cached_property
    def _L(self) -> np.ndarray:
        return np.vstack([vec(l.matrix.T) for l in self.left])

    def coefficients(self, X) -> np.ndarray:
        """``Tr{left[k] X}`` for all k."""
        return self._L @ vec(X)

    def reconstruct(self, X) -> np.ndarray:
        return unvec(self._R @ self.coefficients(X), self.space.dim)

    def group_of(self, lam: complex) -> tuple[int, ...]:
        """Indices of eigenvalues within ``grouping_tol`` of ``lam``."""
        return tuple(np.flatnonzero(np.abs(self.eigenvalues - lam) < self.grouping_tol))

    def projector(self, indices: Sequence[int]) -> np.ndarray:
        """Dense projector sum_k r_k Tr{l_k .} over ``indices``."""
        idx = list(indices)
        return self._R[:, idx] @ self._L[idx, :]

    def stationary_index(self) -> int:
        k = int(np.argmin(np.abs(self.eigenvalues)))
        return k


def _group(eigenvalues: np.ndarray, tol: float) -> tuple[tuple[int, ...], ...]:
    n = len(eigenvalues)
    seen = np.zeros(n, bool)
    groups = []
    for k in np.argsort(eigenvalues.imag + 1e-3 * eigenvalues.real):
        if seen[k]:
            continue
        # transitive closure so chains of near-equal values land together
        members = {int(k)}
        frontier = [int(k)]
        while frontier:
            j = frontier.pop()
            near = np.flatnonzero((np.abs(eigenvalues - eigenvalues[j]) < tol) & ~seen)
            for m in near:
                if int(m) not in members:
                    members.add(int(m))
                    frontier.append(int(m))
        for m in members:
            seen[m] = True
        groups.append(tuple(sorted(members)))
    return tuple(groups)


def spectral_decompose(
    L: SuperOperator, grouping_tol: float | None = None, cond_limit: float = 1e10
) -> SpectralDecomposition:
    """Diagonalize a (generally non-normal) superoperator.

    Left eigen-operators are read off the inverse of the right-eigenvector
    matrix, so biorthonormality holds by construction. If an eigenvalue
    sits within ``grouping_tol`` of zero, the corresponding right
    eigen-operator is normalized to unit trace and its left partner is
    scaled accordingly (for a trace-preserving generator the left partner
    is then the identity).

    Parameters
    ----------
    L : SuperOperator
    grouping_tol : float, optional
        Eigenvalues closer than this are reported as one degenerate group.
        Defaults to ``1e-8`` times the spectral radius.
    cond_limit : float
        Maximum accepted condition number of the eigenvector matrix; a
        larger one means the map is numerically defective.
    """
    M = L.matrix
    if not np.all(np.isfinite(M)):
        raise InvalidArgument("superoperator has non-finite entries")
    try:
        w, R = la.eig(M)
    except la.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise NumericalFailure(f"eigensolver did not converge: {exc}") from exc
    radius = float(np.max(np.abs(w))) if w.size else 0.0
    if grouping_tol is None:
        grouping_tol = 1e-8 * max(radius, 1.0)
    if grouping_tol <= 0:
        raise InvalidArgument("grouping_tol must be positive")

    cond = np.linalg.cond(R)
    if not np.isfinite(cond) or cond > cond_limit:
        groups = _group(w, max(grouping_tol, 1e-6 * max(radius, 1.0)))
        worst = max(groups, key=len)
        raise DefectiveSpectrumError(
            f"eigenvector matrix has condition number {cond:.3g}; suspected "
            f"defective cluster near {w[worst[0]]:.6g} (size {len(worst)})"
        )
    Linv = np.linalg.inv(R)

    d = L.space.dim
    k0 = int(np.argmin(np.abs(w)))
    if abs(w[k0]) < grouping_tol:
        t = np.trace(unvec(R[:, k0], d))
        if abs(t) > 1e-12:
            R[:, k0] /= t
            Linv[k0, :] *= t

    right = tuple(Operator(L.space, unvec(R[:, k], d)) for k in range(w.size))
    # row k of Linv gives Tr{l_k X} = sum_ij Linv[k, vecindex(i,j)] X_ij,
    # i.e. l_k^T reshaped column-wise
    left = tuple(Operator(L.space, unvec(Linv[k, :], d).T) for k in range(w.size))
    return SpectralDecomposition(
        space=L.space,
        eigenvalues=w,
        right=right,
        left=left,
        grouping_tol=float(grouping_tol),
        groups=_group(w, grouping_tol),
    )


def reduced_resolvent(
    L: SuperOperator | SpectralDecomposition,
    z: complex,
    exclude: Sequence[complex] = (),
    decomposition: SpectralDecomposition | None = None,
) -> SuperOperator:
    """``(z - L)^{-1}`` on the complement of the excluded eigenspaces.

    The returned map is ``sum_{lambda not excluded} (z - lambda)^{-1}
    r_lambda Tr{l_lambda .}``; it annihilates excluded eigenspaces. An
    eigenvalue is excluded when it lies within ``grouping_tol`` of one of
    the values in ``exclude``.

    Raises
    ------
    SingularResolventError
        If ``z`` lies within ``grouping_tol`` of a non-excluded eigenvalue.
    """
    if isinstance(L, SpectralDecomposition):
        dec = L
    else:
        dec = decomposition if decomposition is not None else spectral_decompose(L)
    w = dec.eigenvalues
    tol = dec.grouping_tol
    keep = np.ones(w.size, bool)
    for e in exclude:
        keep &= np.abs(w - e) >= tol
    close = keep & (np.abs(w - z) < tol)
    if np.any(close):
        raise SingularResolventError(z, w[close])
    factors = np.zeros(w.size, complex)
    factors[keep] = 1.0 / (z - w[keep])
    m = (dec._R * factors) @ dec._L
    return SuperOperator(dec.space, m)
