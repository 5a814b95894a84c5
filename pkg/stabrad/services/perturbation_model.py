from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..errors import DimensionMismatch, NonBinaryMask, UnstableNominal
from .matrix_core import as_mask, as_real_matrix, hadamard, spectral_abscissa


@dataclass(frozen=True)
class DesignBlock:
    B_o: np.ndarray
    C_o: np.ndarray
    S_o: np.ndarray
    epsilon: Optional[float] = None


@dataclass(frozen=True)
class ProblemSpec:
    """Nominal A with perturbation structure B (n x m), C (p x n) and mask S (m x p)."""
    name: str
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    S: np.ndarray
    design: Optional[DesignBlock] = None

    @property
    def n(self) -> int:
        return int(self.A.shape[0])

    @property
    def m(self) -> int:
        return int(self.B.shape[1])

    @property
    def p(self) -> int:
        return int(self.C.shape[0])

    def with_nominal(self, A: np.ndarray) -> "ProblemSpec":
        """Same structure, different nominal matrix (no validation)."""
        return ProblemSpec(name=self.name, A=as_real_matrix(A, "A"), B=self.B, C=self.C, S=self.S,
                           design=self.design)


def spec_from_arrays(name: str, A, B, C, S, design: Optional[dict] = None) -> ProblemSpec:
    """
    Importer hook: builds a validated ProblemSpec from array-likes.
    `design` may carry keys Bo, Co, So, epsilon (any subset).
    """
    block = None
    if design is not None:
        B_arr = as_real_matrix(B, "B")
        C_arr = as_real_matrix(C, "C")
        S_arr = as_mask(S, "S")
        block = DesignBlock(
            B_o=as_real_matrix(design["Bo"], "Bo") if design.get("Bo") is not None else B_arr,
            C_o=as_real_matrix(design["Co"], "Co") if design.get("Co") is not None else C_arr,
            S_o=as_mask(design["So"], "So") if design.get("So") is not None else S_arr,
            epsilon=float(design["epsilon"]) if design.get("epsilon") is not None else None,
        )
    spec = ProblemSpec(
        name=str(name),
        A=as_real_matrix(A, "A"),
        B=as_real_matrix(B, "B"),
        C=as_real_matrix(C, "C"),
        S=as_mask(S, "S"),
        design=block,
    )
    return validate(spec)


def _dimension_violations(spec: ProblemSpec) -> List[str]:
    out: List[str] = []
    A, B, C, S = spec.A, spec.B, spec.C, spec.S
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        out.append(f"A must be square, got {A.shape}")
    if B.shape[0] != n:
        out.append(f"B must have {n} rows (A is {A.shape}), got {B.shape}")
    if C.shape[1] != A.shape[1]:
        out.append(f"C must have {A.shape[1]} columns (A is {A.shape}), got {C.shape}")
    if S.shape != (B.shape[1], C.shape[0]):
        out.append(f"S must be {B.shape[1]}x{C.shape[0]} (m x p), got {S.shape}")
    if spec.design is not None:
        d = spec.design
        if d.B_o.shape[0] != n:
            out.append(f"Bo must have {n} rows, got {d.B_o.shape}")
        if d.C_o.shape[1] != A.shape[1]:
            out.append(f"Co must have {A.shape[1]} columns, got {d.C_o.shape}")
        if d.S_o.shape != (d.B_o.shape[1], d.C_o.shape[0]):
            out.append(f"So must be {d.B_o.shape[1]}x{d.C_o.shape[0]}, got {d.S_o.shape}")
    return out


def collect_violations(spec: ProblemSpec) -> List[str]:
    """Every invariant violation of `spec` (empty list = valid)."""
    out = _dimension_violations(spec)
    for label, mask in (("S", spec.S), ("So", spec.design.S_o if spec.design else None)):
        if mask is not None and not np.all((mask == 0.0) | (mask == 1.0)):
            out.append(f"{label} must be binary (0/1)")
    if spec.design is not None and spec.design.epsilon is not None and not spec.design.epsilon > 0:
        out.append(f"epsilon must be > 0, got {spec.design.epsilon}")
    if not _dimension_violations(spec):
        alpha = spectral_abscissa(spec.A)
        if alpha >= 0:
            out.append(f"A is not stable: spectral abscissa {alpha:.6g} >= 0")
    return out


def validate(spec: ProblemSpec) -> ProblemSpec:
    violations = collect_violations(spec)
    if not violations:
        return spec
    if _dimension_violations(spec):
        raise DimensionMismatch(violations)
    if any("binary" in v for v in violations):
        raise NonBinaryMask(violations)
    if any("not stable" in v for v in violations):
        raise UnstableNominal(violations)
    raise DimensionMismatch(violations)


def resolve_design(spec: ProblemSpec, epsilon: Optional[float] = None) -> DesignBlock:
    """Design-side structure; falls back to (B, C, S) when the problem has no design block."""
    d = spec.design
    if d is None:
        d = DesignBlock(B_o=spec.B, C_o=spec.C, S_o=spec.S, epsilon=None)
    if epsilon is not None:
        d = DesignBlock(B_o=d.B_o, C_o=d.C_o, S_o=d.S_o, epsilon=float(epsilon))
    return d


def apply_perturbation(spec: ProblemSpec, delta: np.ndarray) -> np.ndarray:
    return apply_structured(spec.A, spec.B, spec.C, delta)


def apply_structured(A: np.ndarray, B: np.ndarray, C: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """A + B delta C."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (B.shape[1], C.shape[0]):
        raise DimensionMismatch([f"perturbation must be {B.shape[1]}x{C.shape[0]}, got {delta.shape}"])
    return A + B @ delta @ C


def project_sparsity(delta: np.ndarray, S: np.ndarray) -> np.ndarray:
    """S o delta; entries outside the mask become exact zeros."""
    out = hadamard(np.asarray(delta, dtype=float), S)
    out[S == 0.0] = 0.0
    return out
