"""
First-order eigenvalue sensitivities of A + B Delta C.

[P_k]_ij = d lambda_k / d Delta_ij = (y_k* B)_i (C z_k)_j, a rank-one outer product.
"""
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..errors import DimensionMismatch
from .matrix_core import EigenSystem, eigensystem
from .perturbation_model import ProblemSpec


@dataclass(frozen=True)
class SensitivityBundle:
    eig: EigenSystem
    S: np.ndarray
    P: np.ndarray               # (n, m, p) complex
    P_r: np.ndarray             # (n, m, p) real parts
    masked: np.ndarray          # (n, m, p) S o P_k^r
    masked_norms: np.ndarray    # (n,)
    tol_feas: float
    feasible: Tuple[int, ...]   # K

    @property
    def real_parts(self) -> np.ndarray:
        return self.eig.values.real

    @property
    def norms(self) -> np.ndarray:
        """||P_k^r|| (unmasked)."""
        return np.linalg.norm(self.P_r.reshape(self.P_r.shape[0], -1), axis=1)


@dataclass(frozen=True)
class Feasibility:
    indices: Tuple[int, ...]
    flags: Tuple[bool, ...]

    @property
    def empty(self) -> bool:
        return not self.indices


def sensitivity_tensor(B: np.ndarray, C: np.ndarray, eig: EigenSystem) -> np.ndarray:
    yB = eig.left.conj().T @ B      # row k = y_k* B
    Cz = C @ eig.right              # column k = C z_k
    return np.einsum("ki,jk->kij", yB, Cz)


def bundle_from_matrices(A: np.ndarray, B: np.ndarray, C: np.ndarray, S: np.ndarray,
                         tol_feas: Optional[float] = None, simplicity_tol: Optional[float] = None,
                         eig: Optional[EigenSystem] = None) -> SensitivityBundle:
    if eig is None:
        eig = eigensystem(A, simplicity_tol)
    if tol_feas is None:
        tol_feas = 1e-9 * (1.0 + np.linalg.norm(B, "fro") * np.linalg.norm(C, "fro"))

    P = sensitivity_tensor(B, C, eig)
    P_r = P.real.copy()
    masked = P_r * S[None, :, :]
    masked[:, S == 0.0] = 0.0
    masked_norms = np.linalg.norm(masked.reshape(masked.shape[0], -1), axis=1)
    feasible = tuple(int(k) for k in np.flatnonzero(masked_norms > tol_feas))

    for arr in (P, P_r, masked, masked_norms):
        arr.setflags(write=False)
    return SensitivityBundle(
        eig=eig,
        S=S,
        P=P,
        P_r=P_r,
        masked=masked,
        masked_norms=masked_norms,
        tol_feas=float(tol_feas),
        feasible=feasible,
    )


def build_sensitivities(spec: ProblemSpec, eig: Optional[EigenSystem] = None,
                        tol_feas: Optional[float] = None,
                        simplicity_tol: Optional[float] = None) -> SensitivityBundle:
    return bundle_from_matrices(spec.A, spec.B, spec.C, spec.S, tol_feas=tol_feas,
                                simplicity_tol=simplicity_tol, eig=eig)


def linearized_real_parts(bundle: SensitivityBundle, delta: np.ndarray) -> np.ndarray:
    """lambda_k^r + 1^T (P_k^r o Delta) 1 for every k."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != bundle.P_r.shape[1:]:
        raise DimensionMismatch([f"perturbation must be {bundle.P_r.shape[1:]}, got {delta.shape}"])
    return bundle.real_parts + np.einsum("kij,ij->k", bundle.P_r, delta)


def linearized_abscissa(bundle: SensitivityBundle, beta: float) -> Tuple[float, int]:
    """max_k SA_k(beta) = lambda_k^r + beta ||S o P_k^r||, with its arg-max (smallest k on ties)."""
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    sa = bundle.real_parts + beta * bundle.masked_norms
    k = int(np.argmax(sa))
    return float(sa[k]), k


def feasibility(bundle: SensitivityBundle) -> Feasibility:
    flags = tuple(bool(v > bundle.tol_feas) for v in bundle.masked_norms)
    return Feasibility(indices=bundle.feasible, flags=flags)


def describe(bundle: SensitivityBundle) -> List[dict]:
    """Per-eigenvalue diagnostic rows (used by the `normality` command)."""
    rows = []
    for k, lam in enumerate(bundle.eig.values):
        rows.append({
            "k": k,
            "eigenvalue": [float(lam.real), float(lam.imag)],
            "norm_P_r": float(bundle.norms[k]),
            "norm_masked_P_r": float(bundle.masked_norms[k]),
            "feasible": k in bundle.feasible,
            "eigvec_condition": float(bundle.eig.condition[k]),
        })
    return rows


def crossing_sensitivity(A: np.ndarray, B: np.ndarray, C: np.ndarray, S: np.ndarray) -> Optional[np.ndarray]:
    """
    S o (C A^{-1} B)^T: gradient of log|det(A + B Delta C)| at Delta = 0.

    An eigenvalue crosses the origin exactly when the determinant vanishes, and the
    determinant is a polynomial in Delta, so this model stays smooth where a complex
    pair collides on the real axis. None when A is singular.
    """
    try:
        M = C @ np.linalg.solve(A, B)
    except np.linalg.LinAlgError:
        return None
    G = M.T * S
    G[S == 0.0] = 0.0
    return G


def log_abs_det(A: np.ndarray) -> Tuple[float, float]:
    """(sign, log|det A|); sign 0 for a singular matrix."""
    sign, logdet = np.linalg.slogdet(A)
    return float(sign), float(logdet)
