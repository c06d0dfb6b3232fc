"""Solver for the conjugate-block system ``A x + B conj(x) = r``.

The system is the first block row of

    [[A,       B      ], [x      ]   [r      ]
     [conj(B), conj(A)]] [conj(x)] = [conj(r)]

and is solved by writing ``x = p + jq`` and factorising the equivalent
real ``2n x 2n`` sparse system with SuperLU.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RESIDUAL_TOL = 1e-10
_DENSE_PIVOT_SEARCH_LIMIT = 4000


class LinearSolveError(ArithmeticError):
    pass


class SingularMatrixError(LinearSolveError):
    def __init__(self, pivot: int | None, detail: str = ""):
        self.pivot = pivot
        where = f" at pivot {pivot}" if pivot is not None else ""
        super().__init__(f"matrix is singular{where}{': ' + detail if detail else ''}")


class NumericalQualityError(LinearSolveError):
    def __init__(self, residual: float):
        self.residual = residual
        super().__init__(f"relative solve residual {residual:.3e} exceeds {RESIDUAL_TOL:.0e}")


@dataclass(frozen=True)
class ConjugateBlockSystem:
    A: sp.spmatrix
    B: np.ndarray  # diagonal of the conjugate block
    r: np.ndarray

    @classmethod
    def from_blocks(cls, A, B, r) -> "ConjugateBlockSystem":
        if sp.issparse(B):
            B = B.diagonal()
        elif np.ndim(B) == 2:
            B = np.diag(B)
        return cls(sp.csc_matrix(A, dtype=complex), np.asarray(B, dtype=complex), np.asarray(r, dtype=complex))

    @property
    def n(self) -> int:
        return self.r.shape[0]

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.A @ x + self.B * np.conj(x)

    def residual(self, x: np.ndarray) -> float:
        """``||A x + B conj(x) - r||_inf / (1 + ||r||_inf)``."""
        res = self.apply(x) - self.r
        return float(np.max(np.abs(res), initial=0.0) / (1.0 + np.max(np.abs(self.r), initial=0.0)))

    def doubled(self) -> np.ndarray:
        """The dense ``2n x 2n`` complex matrix acting on ``[x; conj(x)]``."""
        A = self.A.toarray()
        B = np.diag(self.B)
        return np.block([[A, B], [np.conj(B), np.conj(A)]])


@dataclass(frozen=True)
class RealifiedSystem:
    M: sp.csc_matrix
    b: np.ndarray

    @property
    def n(self) -> int:
        return self.b.shape[0] // 2


def realify(sys: ConjugateBlockSystem) -> RealifiedSystem:
    """Equivalent real system in ``(Re x, Im x)``."""
    A = sp.csc_matrix(sys.A)
    Ar, Ai = A.real, A.imag
    Br = sp.diags(sys.B.real)
    Bi = sp.diags(sys.B.imag)
    M = sp.bmat([[Ar + Br, Bi - Ai], [Ai + Bi, Ar - Br]], format="csc")
    M.eliminate_zeros()
    b = np.concatenate([sys.r.real, sys.r.imag])
    return RealifiedSystem(M, b)


def complex_from_real(z: np.ndarray) -> np.ndarray:
    n = z.shape[0] // 2
    return z[:n] + 1j * z[n:]


def _find_zero_pivot(M: sp.spmatrix) -> int | None:
    if M.shape[0] > _DENSE_PIVOT_SEARCH_LIMIT:
        return None
    _, _, U = scipy.linalg.lu(M.toarray())
    d = np.abs(np.diag(U))
    tol = max(M.shape) * np.finfo(float).eps * max(d.max(initial=0.0), 1.0)
    small = np.flatnonzero(d <= tol)
    return int(small[0]) if small.size else None


class Factorization:
    """Sparse LU of a realified matrix, reusable across right-hand sides."""

    def __init__(self, M: sp.spmatrix, perm_c: np.ndarray | None = None):
        M = sp.csc_matrix(M)
        if M.shape[0] != M.shape[1]:
            raise ValueError(f"matrix must be square, got {M.shape}")
        self.shape = M.shape
        try:
            if perm_c is None:
                self._lu = spla.splu(M, permc_spec="COLAMD")
                self.perm_c = self._lu.perm_c.copy()
                self._col_perm = None
            else:
                self.perm_c = np.asarray(perm_c)
                self._col_perm = self.perm_c
                self._lu = spla.splu(M[:, self.perm_c], permc_spec="NATURAL")
        except RuntimeError as exc:
            raise SingularMatrixError(_find_zero_pivot(M), str(exc)) from None
        diag = np.abs(self._lu.U.diagonal())
        if not np.all(np.isfinite(diag)) or diag.min(initial=np.inf) == 0.0:
            raise SingularMatrixError(_find_zero_pivot(M), "zero pivot in U")

    def solve(self, b: np.ndarray) -> np.ndarray:
        y = self._lu.solve(np.asarray(b, dtype=float))
        if self._col_perm is None:
            return y
        x = np.empty_like(y)
        x[self._col_perm] = y
        return x


def factorize(M: sp.spmatrix | RealifiedSystem, perm_c: np.ndarray | None = None) -> Factorization:
    """LU with partial pivoting; COLAMD ordering unless ``perm_c`` is supplied."""
    if isinstance(M, RealifiedSystem):
        M = M.M
    return Factorization(M, perm_c)


class ConjugateBlockSolver:
    """Solves a sequence of systems sharing one sparsity pattern.

    The column ordering found by the first factorisation is kept and reused
    for every later one; values are refactorised on each call.
    """

    def __init__(self):
        self.perm_c: np.ndarray | None = None

    def solve(self, sys: ConjugateBlockSystem) -> np.ndarray:
        rs = realify(sys)
        fac = factorize(rs.M, self.perm_c)
        if self.perm_c is None:
            self.perm_c = fac.perm_c
        x = complex_from_real(fac.solve(rs.b))
        res = sys.residual(x)
        if not res < RESIDUAL_TOL:
            raise NumericalQualityError(res)
        return x


def solve_conjugate_block(sys: ConjugateBlockSystem) -> np.ndarray:
    """Return ``x`` with ``A x + B conj(x) = r``."""
    return ConjugateBlockSolver().solve(sys)
