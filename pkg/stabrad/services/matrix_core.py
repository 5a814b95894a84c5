"""
Dense matrix primitives: Frobenius / Hadamard algebra, spectral abscissa,
eigendecomposition with biorthogonal left/right eigenvectors, normality gap.

Matrices are plain float64 / complex128 numpy arrays; helpers below validate
shape and finiteness at the boundary and return read-only copies.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from ..errors import DefectiveMatrix, DimensionMismatch, NonBinaryMask, NumericError, RepeatedEigenvalue


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def as_real_matrix(x, name: str = "matrix") -> np.ndarray:
    """Finite 2-D float64 array (row-major), rows >= 1 and cols >= 1."""
    try:
        a = np.array(x, dtype=float)
    except (TypeError, ValueError):
        raise DimensionMismatch([f"{name}: not a rectangular numeric array"])
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionMismatch([f"{name}: expected a non-empty 2-D array, got shape {a.shape}"])
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{name}: NaN/Inf entries are not accepted")
    return _freeze(a)


def as_mask(x, name: str = "S") -> np.ndarray:
    a = as_real_matrix(x, name)
    if not np.all((a == 0.0) | (a == 1.0)):
        raise NonBinaryMask([f"{name}: entries must be 0 or 1"])
    return a


def complement(S: np.ndarray) -> np.ndarray:
    return 1.0 - S


def frobenius_norm(M: np.ndarray) -> float:
    return float(np.linalg.norm(M, "fro"))


def hadamard(M1: np.ndarray, M2: np.ndarray) -> np.ndarray:
    if np.shape(M1) != np.shape(M2):
        raise DimensionMismatch([f"hadamard: shape {np.shape(M1)} vs {np.shape(M2)}"])
    return np.multiply(M1, M2)


def _require_square(A: np.ndarray, name: str = "A") -> None:
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch([f"{name}: expected a square matrix, got shape {A.shape}"])


def eigenvalues(A: np.ndarray) -> np.ndarray:
    try:
        w = scipy.linalg.eigvals(A, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericError(f"eigensolver failed: {e}") from e
    if not np.all(np.isfinite(w)):
        raise NumericError("eigensolver returned non-finite eigenvalues")
    return w


def spectral_abscissa(A: np.ndarray) -> float:
    _require_square(A)
    return float(np.max(eigenvalues(A).real))


def spectral_abscissa_batch(mats: np.ndarray) -> np.ndarray:
    """alpha for a stack of square matrices, shape (N, n, n) -> (N,)."""
    try:
        w = np.linalg.eigvals(mats)
    except np.linalg.LinAlgError as e:
        raise NumericError(f"eigensolver failed: {e}") from e
    return np.max(w.real, axis=-1)


def normality_gap(A: np.ndarray) -> float:
    _require_square(A)
    return frobenius_norm(A.T @ A - A @ A.T)


def eigen_order(values: np.ndarray) -> np.ndarray:
    """Descending real part, ties by descending imaginary part."""
    return np.lexsort((-values.imag, -values.real))


def min_separation(values: np.ndarray) -> float:
    if values.size < 2:
        return float("inf")
    d = np.abs(values[:, None] - values[None, :])
    np.fill_diagonal(d, np.inf)
    return float(np.min(d))


@dataclass(frozen=True)
class EigenSystem:
    values: np.ndarray          # (n,) complex
    right: np.ndarray           # (n, n) complex, column k = z_k
    left: np.ndarray            # (n, n) complex, column k = y_k, y_k* z_k = 1
    separation: float
    condition: np.ndarray       # (n,) ||y_k|| ||z_k|| / |y_k* z_k|

    @property
    def order(self) -> int:
        return int(self.values.shape[0])

    @property
    def real_parts(self) -> np.ndarray:
        return self.values.real


def eigensystem(A: np.ndarray, simplicity_tol: Optional[float] = None) -> EigenSystem:
    _require_square(A)
    if simplicity_tol is None:
        simplicity_tol = 1e-8 * max(1.0, frobenius_norm(A))
    if not simplicity_tol > 0:
        raise ValueError(f"simplicity_tol must be > 0, got {simplicity_tol}")

    try:
        w, Z = scipy.linalg.eig(A, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericError(f"eigensolver failed: {e}") from e

    idx = eigen_order(w)
    w = w[idx]
    Z = Z[:, idx].astype(complex)

    sep = min_separation(w)
    if sep <= simplicity_tol:
        raise RepeatedEigenvalue(
            f"eigenvalue separation {sep:.3e} <= simplicity tolerance {simplicity_tol:.3e}"
        )

    # Y = Z^{-*}: y_k* z_k = 1 by construction
    if np.linalg.cond(Z) > 1.0 / np.finfo(float).eps:
        raise DefectiveMatrix("right eigenvector matrix is numerically singular")
    try:
        Y = np.linalg.inv(Z).conj().T
    except np.linalg.LinAlgError as e:
        raise DefectiveMatrix(f"right eigenvector matrix is singular: {e}") from e

    cond = np.linalg.norm(Y, axis=0) * np.linalg.norm(Z, axis=0) / np.abs(np.sum(Y.conj() * Z, axis=0))

    return EigenSystem(
        values=_freeze(w),
        right=_freeze(Z),
        left=_freeze(Y),
        separation=sep,
        condition=_freeze(cond),
    )
