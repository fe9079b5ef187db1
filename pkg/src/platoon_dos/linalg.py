"""Small dense matrix kernels.

Everything here is a pure function on numpy arrays. The general matrix
exponential is scipy's scaling-and-squaring routine; the platoon system
matrix additionally has a closed-form Jordan decomposition that is used on
the hot paths (simulation, vertex construction).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, DomainError, StructureError


@dataclass(frozen=True)
class NumericPolicy:
    """Shared tolerances; tests and production read the same values."""

    similarity: float = 1e-12
    psd: float = 1e-9
    lyapunov: float = 1e-8
    lmi_margin: float = 1e-7
    derivation: float = 1e-8


TOL = NumericPolicy()


def _square(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    return A


def expm(A, L: float = 1.0) -> np.ndarray:
    """Return exp(A * L)."""
    A = _square(A)
    if not np.isfinite(L):
        raise DomainError("L must be finite")
    return sla.expm(A * L)


def expm_integral(A, L: float) -> np.ndarray:
    """Return the integral of exp(A s) for s in [0, L].

    Uses the exponential of the block matrix [[A, I], [0, 0]], whose upper
    right block is the wanted integral. Works for singular A.
    """
    A = _square(A)
    if not np.isfinite(L):
        raise DomainError("L must be finite")
    if L < 0:
        raise DomainError(f"integration length must be >= 0, got {L}")
    n = A.shape[0]
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = A
    aug[:n, n:] = np.eye(n)
    return sla.expm(aug * L)[:n, n:]


def expm_pair(A, L: float) -> tuple[np.ndarray, np.ndarray]:
    """(exp(A L), integral_0^L exp(A s) ds) from a single exponential."""
    A = _square(A)
    if L < 0:
        raise DomainError(f"integration length must be >= 0, got {L}")
    n = A.shape[0]
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = A
    aug[:n, n:] = np.eye(n)
    E = sla.expm(aug * L)
    return E[:n, :n], E[:n, n:]


@dataclass(frozen=True)
class JordanData:
    """Real Jordan decomposition A = Q J Q^-1 of the platoon matrix.

    ``blocks`` lists (eigenvalue, size) in the column order of Q: the
    size-2 block at zero first, then the stable scalar block.
    """

    Q: np.ndarray
    Qinv: np.ndarray
    blocks: tuple[tuple[float, int], ...]

    @property
    def rate(self) -> float:
        """The nonzero eigenvalue."""
        return self.blocks[1][0]

    @property
    def J(self) -> np.ndarray:
        J = np.zeros((3, 3))
        J[0, 1] = 1.0
        J[2, 2] = self.rate
        return J

    def expm(self, L: float) -> np.ndarray:
        core = np.array([[1.0, L, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, np.exp(self.rate * L)]])
        return self.Q @ core @ self.Qinv

    def expm_integral(self, L: float) -> np.ndarray:
        if L < 0:
            raise DomainError(f"integration length must be >= 0, got {L}")
        lam = self.rate
        core = np.array(
            [
                [L, 0.5 * L * L, 0.0],
                [0.0, L, 0.0],
                [0.0, 0.0, np.expm1(lam * L) / lam],
            ]
        )
        return self.Q @ core @ self.Qinv


def jordan_platoon(A0) -> JordanData:
    """Closed-form Jordan data for [[-r, r, 0], [0, 0, 1], [0, 0, 0]], r > 0.

    Not a general Jordan routine: any other sparsity pattern is rejected.
    """
    A0 = _square(A0)
    if A0.shape != (3, 3):
        raise StructureError(f"platoon matrix must be 3x3, got {A0.shape}")
    r = A0[0, 1]
    pattern = np.array([[-r, r, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
    if not r > 0 or not np.array_equal(A0, pattern):
        raise StructureError("matrix does not have the platoon system structure")
    eps = 1.0 / r
    # columns: eigenvector at 0, generalized eigenvector at 0, eigenvector at -r
    Q = np.array([[1.0, -eps, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    Qinv = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, -1.0, eps]])
    return JordanData(Q=Q, Qinv=Qinv, blocks=((0.0, 2), (-r, 1)))


def is_psd(M, tol: float = TOL.psd) -> tuple[bool, float]:
    """Symmetrize M and test min eigenvalue >= -tol. Returns (verdict, min eig)."""
    M = _square(M)
    lam = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
    return lam >= -tol, lam


def min_eig(M) -> float:
    M = _square(M)
    return float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])


def spectral_radius(A) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(_square(A)))))
