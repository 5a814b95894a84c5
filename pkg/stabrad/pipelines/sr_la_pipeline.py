from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.optimize import brentq

from ..config import AppConfig
from ..errors import FeasibilityError
from ..services.perturbation_model import ProblemSpec
from ..services.sensitivity import SensitivityBundle, build_sensitivities
from ..utils_log import say

STATUS_OK = "ok"
STATUS_INFEASIBLE = "infeasible"


@dataclass
class Candidate:
    k: int
    eigenvalue: complex
    value: float               # -lambda_k^r / ||S o P_k^r||
    delta: np.ndarray


@dataclass
class SRReport:
    problem: str
    method: str                # "la" | "sla"
    status: str                # "ok" | "infeasible"
    value: Optional[float] = None
    argmin_k: Optional[int] = None
    delta_star: Optional[np.ndarray] = None
    candidates: List[Candidate] = field(default_factory=list)
    trace: Optional[List[Any]] = None
    alpha_nominal: Optional[float] = None
    alpha_final: Optional[float] = None
    settings: Dict[str, Any] = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status == STATUS_OK


def delta_k_star(bundle: SensitivityBundle, k: int) -> np.ndarray:
    """-lambda_k^r (S o P_k^r) / ||S o P_k^r||^2: least-norm Delta zeroing the linearized real part."""
    if k not in bundle.feasible:
        raise FeasibilityError(f"eigenvalue {k} is not in the feasible set K={list(bundle.feasible)}")
    lam_r = float(bundle.real_parts[k])
    nrm = float(bundle.masked_norms[k])
    return (-lam_r / (nrm * nrm)) * bundle.masked[k]


def candidate_value(bundle: SensitivityBundle, k: int) -> float:
    if k not in bundle.feasible:
        raise FeasibilityError(f"eigenvalue {k} is not in the feasible set K={list(bundle.feasible)}")
    return float(-bundle.real_parts[k] / bundle.masked_norms[k])


def sa_root(bundle: SensitivityBundle, k: int) -> float:
    """Root beta of SA_k(beta) = lambda_k^r + beta ||S o P_k^r|| found by bracketing, not closed form."""
    if k not in bundle.feasible:
        raise FeasibilityError(f"eigenvalue {k} is not in the feasible set K={list(bundle.feasible)}")
    lam_r = float(bundle.real_parts[k])
    nrm = float(bundle.masked_norms[k])

    def sa(beta: float) -> float:
        return lam_r + beta * nrm

    hi = 1.0
    while sa(hi) < 0:
        hi *= 2.0
    return float(brentq(sa, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500))


def sr_la_from_bundle(bundle: SensitivityBundle, problem: str = "") -> SRReport:
    candidates: List[Candidate] = []
    best: Optional[Candidate] = None
    for k in bundle.feasible:
        cand = Candidate(
            k=k,
            eigenvalue=complex(bundle.eig.values[k]),
            value=candidate_value(bundle, k),
            delta=delta_k_star(bundle, k),
        )
        candidates.append(cand)
        # ties within 1e-12 relative keep the smaller index
        if best is None or cand.value < best.value * (1.0 - 1e-12):
            best = cand

    alpha = float(np.max(bundle.real_parts))
    if best is None:
        say("la", f"{problem}: feasible set is empty, SR_la = inf")
        return SRReport(problem=problem, method="la", status=STATUS_INFEASIBLE, candidates=[],
                        alpha_nominal=alpha)

    say("la", f"{problem}: SR_la = {best.value:.10g} (k={best.k}, |K|={len(candidates)})")
    return SRReport(
        problem=problem,
        method="la",
        status=STATUS_OK,
        value=best.value,
        argmin_k=best.k,
        delta_star=best.delta,
        candidates=candidates,
        alpha_nominal=alpha,
    )


def sr_la(spec: ProblemSpec, cfg: Optional[AppConfig] = None) -> SRReport:
    cfg = cfg or AppConfig()
    bundle = build_sensitivities(
        spec,
        tol_feas=cfg.tol_feas(spec.B, spec.C),
        simplicity_tol=cfg.simplicity_tol(spec.A),
    )
    report = sr_la_from_bundle(bundle, problem=spec.name)
    report.settings = {
        "simplicity_tol": cfg.simplicity_tol(spec.A),
        "tol_feas": cfg.tol_feas(spec.B, spec.C),
    }
    return report
