"""
Successive-linear-approximation stability radius.

Each iteration re-linearizes the eigenvalues at the current matrix A_j, takes for
every shiftable eigenvalue the radius-beta step beta (S o P_k^r)/||S o P_k^r||,
keeps the one with the largest TRUE spectral abscissa, and stops once A_j is
no longer stable. The radius is the norm of the accumulated sum of steps.

Repairs:
  - empty feasible set (or a repeated eigenvalue) after the first iteration:
    inject masked Gaussian noise B N C of norm repair_noise and retry;
  - no strict increase of the abscissa: retry the iteration with beta * beta_growth
    (the larger beta is used for that iteration only).

Eigenvalue steps only see the crossings the current eigenvalues are heading for.
A complex pair of a 2x2 block moves with the trace and reaches the origin only
after colliding on the real axis, which no first-order eigenvalue model predicts.
With crossing_walk on, a second walk linearizes log|det(A_j)| instead (the
determinant vanishes exactly when an eigenvalue reaches 0) and SR_sla is the
smaller of the two destabilizing sums.
"""
from dataclasses import dataclass, field, replace
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..config import AppConfig, SLAConfig
from ..errors import (DefectiveMatrix, FeasibilityError, InfeasibleAtNominal, NonTermination, NumericError,
                      RepeatedEigenvalue)
from ..services.matrix_core import frobenius_norm, spectral_abscissa
from ..services.perturbation_model import ProblemSpec, apply_structured, project_sparsity
from ..services.sensitivity import bundle_from_matrices, crossing_sensitivity, log_abs_det
from ..utils_log import say
from .sr_la_pipeline import STATUS_OK, SRReport

WALK_EIGENVALUE = "eigenvalue"
WALK_CROSSING = "crossing"

# the determinant walk aims just past det = 0: sign flipped, this fraction of |det A|
_CROSSING_OVERSHOOT = 1e-6


@dataclass
class SLAStep:
    delta: np.ndarray
    k: int
    alpha: float
    beta: float
    candidate_alphas: List[Tuple[int, float]]


@dataclass
class SLAIteration:
    iteration: int
    k: Optional[int]
    beta: float
    step_norm: float
    alpha: float
    cumulative_norm: float
    repairs: List[str] = field(default_factory=list)
    refined: bool = False
    walk: str = WALK_EIGENVALUE


def sla_step(spec_j: ProblemSpec, config: SLAConfig, beta: Optional[float] = None) -> SLAStep:
    """
    Greedy step at A_j = spec_j.A. Raises FeasibilityError when no eigenvalue of A_j
    can be shifted under the mask.
    """
    beta = config.beta if beta is None else float(beta)
    bundle = bundle_from_matrices(spec_j.A, spec_j.B, spec_j.C, spec_j.S,
                                  tol_feas=config.tol_feas, simplicity_tol=config.simplicity_tol)
    if not bundle.feasible:
        raise FeasibilityError("feasible set K is empty at the current iterate")

    best: Optional[SLAStep] = None
    scored: List[Tuple[int, float]] = []
    for k in bundle.feasible:
        delta_k = (beta / bundle.masked_norms[k]) * bundle.masked[k]
        alpha_k = spectral_abscissa(apply_structured(spec_j.A, spec_j.B, spec_j.C, delta_k))
        scored.append((k, alpha_k))
        # strict '>' keeps the smallest k on ties
        if best is None or alpha_k > best.alpha:
            best = SLAStep(delta=delta_k, k=k, alpha=alpha_k, beta=beta, candidate_alphas=scored)
    return best


def _noise(rng: np.random.Generator, spec: ProblemSpec, magnitude: float) -> np.ndarray:
    N = project_sparsity(rng.standard_normal((spec.m, spec.p)), spec.S)
    nn = frobenius_norm(N)
    if nn == 0.0 or magnitude <= 0.0:
        return np.zeros((spec.m, spec.p))
    return N * (magnitude / nn)


def sla_walk(spec: ProblemSpec, config: SLAConfig) -> Iterator[Tuple[SLAIteration, np.ndarray, float]]:
    """
    Unbounded SLA iteration: yields (iteration record, cumulative Delta, alpha(A + B Delta C))
    after every accepted step. The caller decides when to stop; max_iters raises NonTermination.
    """
    rng = np.random.default_rng(config.seed)
    total = np.zeros((spec.m, spec.p))
    A_cur = spec.A
    alpha_cur = spectral_abscissa(A_cur)
    trace: List[SLAIteration] = []
    j = 0

    while True:
        j += 1
        if j > config.max_iters:
            raise NonTermination(f"SLA exceeded max_iters={config.max_iters}", trace)

        beta = config.beta
        repairs: List[str] = []
        n_noise = 0
        n_growth = 0
        while True:
            try:
                step = sla_step(spec.with_nominal(A_cur), config, beta)
            except (FeasibilityError, RepeatedEigenvalue, DefectiveMatrix) as e:
                if j == 1 and n_noise == 0:
                    if isinstance(e, FeasibilityError):
                        raise InfeasibleAtNominal(
                            "none of the eigenvalues of A can be shifted under the sparsity mask "
                            "(feasible set K is empty)"
                        ) from e
                    raise
                if n_noise >= config.max_repairs:
                    raise NonTermination(f"SLA repair budget exhausted at iteration {j}: {e}", trace) from e
                N = _noise(rng, spec, config.repair_noise)
                if not np.any(N):
                    raise NonTermination(f"SLA cannot repair iteration {j}: {e}", trace) from e
                total = total + N
                A_cur = apply_structured(spec.A, spec.B, spec.C, total)
                alpha_cur = spectral_abscissa(A_cur)
                n_noise += 1
                repairs.append("noise")
                continue

            if step.alpha > alpha_cur:
                break
            if n_growth >= config.max_beta_growths:
                raise NonTermination(f"SLA made no progress at iteration {j} (beta={beta:.3e})", trace)
            beta *= config.beta_growth
            n_growth += 1
            repairs.append("beta_growth")

        total = total + step.delta
        A_cur = apply_structured(spec.A, spec.B, spec.C, total)
        alpha_cur = spectral_abscissa(A_cur)
        rec = SLAIteration(
            iteration=j,
            k=step.k,
            beta=beta,
            step_norm=frobenius_norm(step.delta),
            alpha=alpha_cur,
            cumulative_norm=frobenius_norm(total),
            repairs=repairs,
        )
        trace.append(rec)
        if j % 50 == 0 or repairs:
            say("sla", f"iter {j} k={rec.k} alpha={rec.alpha:.6g} beta={beta:.3g} |sum|={rec.cumulative_norm:.6g}"
                       + (f" repairs={repairs}" if repairs else ""))
        yield rec, total, alpha_cur


def crossing_walk(spec: ProblemSpec, config: SLAConfig) -> Iterator[Tuple[SLAIteration, np.ndarray, float]]:
    """
    Determinant walk, same yield protocol as sla_walk. Iteration j linearizes
    det(A + B Delta C) ~ det(A_j) (1 + <G_j, Delta - Delta_j>) with G_j from
    crossing_sensitivity, solves for the least-norm Delta putting the model just past
    det = 0, and moves the cumulative sum towards it by at most beta. Its fixed points
    are least-norm points of the zero-crossing surface.
    """
    total = np.zeros((spec.m, spec.p))
    A_cur = spec.A
    sign0, logdet0 = log_abs_det(A_cur)
    trace: List[SLAIteration] = []
    j = 0

    while True:
        j += 1
        if j > config.max_iters:
            raise NonTermination(f"crossing walk exceeded max_iters={config.max_iters}", trace)

        G = crossing_sensitivity(A_cur, spec.B, spec.C, spec.S)
        g_norm = frobenius_norm(G) if G is not None else 0.0
        if g_norm <= config.tol_feas:
            raise NonTermination(f"determinant cannot be moved under the mask at iteration {j}", trace)

        sign_j, logdet_j = log_abs_det(A_cur)
        ratio = sign0 * sign_j * float(np.exp(logdet0 - logdet_j))     # det(A) / det(A_j)
        target = G * ((float(np.sum(G * total)) - 1.0 - _CROSSING_OVERSHOOT * ratio) / (g_norm * g_norm))
        move = target - total
        dist = frobenius_norm(move)
        step = move if dist <= config.beta else move * (config.beta / dist)

        total = total + step
        A_cur = apply_structured(spec.A, spec.B, spec.C, total)
        alpha_cur = spectral_abscissa(A_cur)
        rec = SLAIteration(
            iteration=j,
            k=None,
            beta=config.beta,
            step_norm=frobenius_norm(step),
            alpha=alpha_cur,
            cumulative_norm=frobenius_norm(total),
            walk=WALK_CROSSING,
        )
        trace.append(rec)
        if j % 50 == 0:
            say("sla", f"crossing iter {j} alpha={rec.alpha:.6g} |sum|={rec.cumulative_norm:.6g}")
        yield rec, total, alpha_cur


def _refine_last_step(spec: ProblemSpec, prev_total: np.ndarray, last: np.ndarray,
                      tol: float) -> Tuple[np.ndarray, float, float]:
    """Bisect the scale t of the last step so that 0 <= alpha <= tol. Returns (total, alpha, t)."""

    def alpha_at(t: float) -> float:
        return spectral_abscissa(apply_structured(spec.A, spec.B, spec.C, prev_total + t * last))

    lo, hi = 0.0, 1.0
    a_hi = alpha_at(hi)
    for _ in range(200):
        if a_hi <= tol:
            break
        mid = 0.5 * (lo + hi)
        a_mid = alpha_at(mid)
        if a_mid >= 0.0:
            hi, a_hi = mid, a_mid
        else:
            lo = mid
        if hi - lo <= np.finfo(float).eps:
            break
    return prev_total + hi * last, a_hi, hi


def _run_to_instability(spec: ProblemSpec, config: SLAConfig,
                        walk: Iterator[Tuple[SLAIteration, np.ndarray, float]],
                        norm_cap: Optional[float] = None) -> Tuple[np.ndarray, float, List[SLAIteration]]:
    """
    Drive a walk until alpha >= 0, refine the last step if asked. Returns (sum, alpha, trace).
    With norm_cap the walk is abandoned (alpha still < 0) once its sum is longer than the cap.
    """
    total = np.zeros((spec.m, spec.p))
    prev_total = total
    trace: List[SLAIteration] = []
    alpha = spectral_abscissa(spec.A)
    for rec, cum, alpha in walk:
        trace.append(rec)
        prev_total, total = total, cum
        if alpha >= 0:
            break
        if norm_cap is not None and rec.cumulative_norm > norm_cap:
            break

    if config.refine_final and trace and alpha > config.refine_tol:
        last = total - prev_total
        total, alpha, t = _refine_last_step(spec, prev_total, last, config.refine_tol)
        rec = trace[-1]
        rec.step_norm = frobenius_norm(t * last)
        rec.alpha = alpha
        rec.cumulative_norm = frobenius_norm(total)
        rec.refined = True
    return total, alpha, trace


def sr_sla_core(spec: ProblemSpec, config: SLAConfig) -> SRReport:
    """SR_sla without input validation; an already unstable A gives value 0."""
    alpha0 = spectral_abscissa(spec.A)
    total = np.zeros((spec.m, spec.p))
    trace: List[SLAIteration] = []
    alpha = alpha0
    walk = WALK_EIGENVALUE

    if alpha0 < 0:
        total, alpha, trace = _run_to_instability(spec, config, sla_walk(spec, config))
        if config.crossing_walk:
            try:
                c_total, c_alpha, c_trace = _run_to_instability(spec, config, crossing_walk(spec, config),
                                                                norm_cap=frobenius_norm(total))
            except (NonTermination, NumericError) as e:
                say("sla", f"{spec.name}: crossing walk dropped: {e}")
            else:
                if c_alpha >= 0 and frobenius_norm(c_total) < frobenius_norm(total):
                    total, alpha, trace, walk = c_total, c_alpha, c_trace, WALK_CROSSING

    value = frobenius_norm(total)
    say("sla", f"{spec.name}: SR_sla = {value:.10g} after {len(trace)} iterations ({walk} walk)")
    return SRReport(
        problem=spec.name,
        method="sla",
        status=STATUS_OK,
        value=value,
        argmin_k=trace[-1].k if trace else None,
        delta_star=total,
        trace=trace,
        alpha_nominal=alpha0,
        alpha_final=alpha,
        settings={"walk": walk},
    )


def sr_sla(spec: ProblemSpec, cfg: Optional[AppConfig] = None,
           config: Optional[SLAConfig] = None) -> SRReport:
    cfg = cfg or AppConfig()
    if config is None:
        config = cfg.sla_config(spec.A, spec.B, spec.C, spectral_abscissa(spec.A))
    report = sr_sla_core(spec, config)
    report.settings = {
        "beta": config.beta,
        "beta_growth": config.beta_growth,
        "repair_noise": config.repair_noise,
        "max_iters": config.max_iters,
        "refine_final": config.refine_final,
        "refine_tol": config.refine_tol,
        "simplicity_tol": config.simplicity_tol,
        "tol_feas": config.tol_feas,
        "seed": config.seed,
        "crossing_walk": config.crossing_walk,
        **report.settings,
    }
    return report


def _budget_history(walk: Iterator[Tuple[SLAIteration, np.ndarray, float]], g_max: float) -> List[Tuple[float, float]]:
    history: List[Tuple[float, float]] = []
    for rec, _total, alpha in walk:
        if rec.cumulative_norm > g_max:
            break
        history.append((rec.cumulative_norm, alpha))
    return history


def _crossing_history(spec: ProblemSpec, config: SLAConfig, g_max: float) -> List[Tuple[float, float]]:
    """Budgeted determinant walk; a walk that gives up keeps the prefix it made."""
    history: List[Tuple[float, float]] = []
    try:
        for rec, _total, alpha in crossing_walk(spec, config):
            if rec.cumulative_norm > g_max:
                break
            history.append((rec.cumulative_norm, alpha))
            if alpha >= 0:
                break
    except (NonTermination, NumericError) as e:
        say("sweep", f"{spec.name}: crossing walk stopped: {e}")
    return history


def _alpha_within(history: List[Tuple[float, float]], budget: float, floor: float) -> float:
    """Largest alpha over the prefix of the walk whose cumulative norm stays within budget."""
    best = floor
    for cum, alpha in history:
        if cum > budget:
            break
        best = max(best, alpha)
    return best


def sweep_beta(config: SLAConfig, gammas: Sequence[float]) -> float:
    """Step for a budgeted sweep: at most a tenth of the finest gamma spacing."""
    points = np.unique(np.concatenate([[0.0], np.asarray(gammas, dtype=float)]))
    gaps = np.diff(points)
    if gaps.size == 0:
        return config.beta
    return min(config.beta, float(np.min(gaps)) / 10.0)


def alpha_sla_sweep(spec: ProblemSpec, cfg: Optional[AppConfig], gamma_grid: Sequence[float],
                    config: Optional[SLAConfig] = None) -> List[Tuple[float, float]]:
    """
    alpha_sla(gamma) for every gamma: the true abscissa after the last iteration whose
    cumulative-sum norm stays within gamma (the step crossing the budget is excluded).
    One run per walk up to the largest gamma serves the whole grid; the step is capped
    by sweep_beta so a row trails its budget by at most a tenth of the grid spacing.
    """
    gammas = [float(g) for g in gamma_grid]
    if any(g < 0 for g in gammas):
        raise ValueError("gamma values must be >= 0")
    if any(b < a for a, b in zip(gammas, gammas[1:])):
        raise ValueError("gamma_grid must be sorted ascending")
    if not gammas:
        return []
    cfg = cfg or AppConfig()
    alpha0 = spectral_abscissa(spec.A)
    if config is None:
        config = cfg.sla_config(spec.A, spec.B, spec.C, alpha0)
    config = replace(config, beta=sweep_beta(config, gammas))

    slack = 1.0 + 1e-12
    g_max = gammas[-1] * slack
    eig_history: List[Tuple[float, float]] = []
    crossing_history: List[Tuple[float, float]] = []
    if g_max > 0:
        eig_history = _budget_history(sla_walk(spec, config), g_max)
        if config.crossing_walk and alpha0 < 0:
            crossing_history = _crossing_history(spec, config, g_max)

    out: List[Tuple[float, float]] = []
    for g in gammas:
        budget = g * slack
        alpha_g = max(_alpha_within(eig_history, budget, alpha0), _alpha_within(crossing_history, budget, alpha0))
        out.append((g, alpha_g))
    return out
