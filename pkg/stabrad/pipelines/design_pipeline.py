"""
System design: the minimum-norm benign modification A + B_o Delta_o C_o whose
approximate stability radius reaches a target epsilon.

  minimize ||Delta_o||^2  s.t.  c_k(Delta_o) >= epsilon,  S_o^c o Delta_o = 0

LA: one constraint per eigenvalue of the modified matrix, c_k = -lambda_k^r / ||S o P_k^r||
    (eigenvalues that cannot be shifted impose none).
SLA: a single constraint c = SR_sla(A + B_o Delta_o C_o), walked with a step tied to
    the target (design_beta_fraction * epsilon) and refined onto alpha = 0.

Solved by an exterior quadratic penalty (rho escalated per outer round, BFGS inner
solves with central finite-difference gradients), multi-started from Delta_o = 0 and
seeded random points, with an optional SLSQP polish that removes the O(1/rho)
residual infeasibility of the penalty solution. SD_sla also starts from the SD_la
optimum and stops after sla_design_max_evals constraint evaluations, keeping the
best point seen.
"""
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from ..config import AppConfig, DesignSolverConfig
from ..errors import InfeasibleAtNominal, NoUpperBound, NotConverged, NumericError, StabRadError
from ..services.matrix_core import spectral_abscissa
from ..services.perturbation_model import DesignBlock, ProblemSpec, apply_structured, resolve_design
from ..services.sensitivity import bundle_from_matrices
from ..utils_log import say
from .oracle_pipeline import free_entries, sr_oracle
from .sr_la_pipeline import sr_la_from_bundle
from .sr_sla_pipeline import sr_sla_core

METHODS = ("la", "sla")


@dataclass
class DesignReport:
    problem: str
    method: str
    epsilon: float
    delta_o_star: np.ndarray
    norm: float
    achieved_sr_la: Optional[float]
    achieved_sr_sla: Optional[float]
    initial_sr: Optional[float]
    target_already_met: bool = False
    solver: Dict[str, Any] = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return bool(self.solver.get("converged"))


@dataclass
class _RestartResult:
    x: np.ndarray
    norm: float
    violation: float
    penalty: float
    iterations: int
    converged: bool


class _BudgetExhausted(Exception):
    pass


class _Evaluator:
    """Memoized constraint values with an optional evaluation budget; remembers the best points seen."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], epsilon: float, tol: float,
                 max_evals: Optional[int]):
        self.fn = fn
        self.epsilon = epsilon
        self.tol = tol
        self.max_evals = max_evals
        self.count = 0
        self._memo: Dict[bytes, np.ndarray] = {}
        self.best_feasible: Optional[Tuple[float, float, np.ndarray]] = None     # (norm, violation, x)
        self.least_violated: Optional[Tuple[float, float, np.ndarray]] = None  # (violation, norm, x)

    @property
    def exhausted(self) -> bool:
        return self.max_evals is not None and self.count >= self.max_evals

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=float)
        key = x.tobytes()
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        if self.exhausted:
            raise _BudgetExhausted()
        self.count += 1
        c = self.fn(x)
        if len(self._memo) >= 4096:
            self._memo.clear()
        self._memo[key] = c

        viol = float(np.max(_violation(c, self.epsilon), initial=0.0))
        nrm = float(np.linalg.norm(x))
        if viol <= self.tol and (self.best_feasible is None or nrm < self.best_feasible[0]):
            self.best_feasible = (nrm, viol, x.copy())
        if self.least_violated is None or (viol, nrm) < self.least_violated[:2]:
            self.least_violated = (viol, nrm, x.copy())
        return c

    def best(self) -> Tuple[np.ndarray, float]:
        """(x, violation) of the smallest feasible point seen, else of the least violated one."""
        if self.best_feasible is not None:
            _nrm, viol, x = self.best_feasible
            return x, viol
        viol, _nrm, x = self.least_violated
        return x, viol


def _scatter(x: np.ndarray, free: np.ndarray, shape: tuple) -> np.ndarray:
    d = np.zeros(shape)
    d[free[:, 0], free[:, 1]] = x
    return d


def sr_la_value(A: np.ndarray, spec: ProblemSpec, cfg: AppConfig) -> float:
    """SR_la of (A, B, C, S); +inf when no eigenvalue can be shifted. Numeric errors propagate."""
    bundle = bundle_from_matrices(A, spec.B, spec.C, spec.S, tol_feas=cfg.tol_feas(spec.B, spec.C),
                                  simplicity_tol=cfg.simplicity_tol(A))
    rep = sr_la_from_bundle(bundle)
    return float(rep.value) if rep.feasible else math.inf


def sr_sla_value(A: np.ndarray, spec: ProblemSpec, cfg: AppConfig, refine_tol: Optional[float] = None,
                 beta: Optional[float] = None) -> float:
    """SR_sla of (A, B, C, S) with refine_final on; 0 for an unstable A, +inf when nothing can be shifted."""
    alpha = spectral_abscissa(A)
    sla_cfg = cfg.sla_config(A, spec.B, spec.C, alpha, refine_final=True,
                             refine_tol=cfg.refine_tol if refine_tol is None else refine_tol, beta=beta)
    try:
        return float(sr_sla_core(spec.with_nominal(A), sla_cfg).value)
    except InfeasibleAtNominal:
        return math.inf


def _approx_sr(A: np.ndarray, spec: ProblemSpec, cfg: AppConfig, method: str, beta: float) -> float:
    if method == "la":
        return sr_la_value(A, spec, cfg)
    return sr_sla_value(A, spec, cfg, refine_tol=cfg.design_refine_tol, beta=beta)


def _approx_sr_or_none(A: np.ndarray, spec: ProblemSpec, cfg: AppConfig, method: str,
                       beta: float) -> Optional[float]:
    try:
        return _approx_sr(A, spec, cfg, method, beta)
    except StabRadError as e:
        say("design", f"SR_{method} not available: {e}")
        return None


def _constraint_fn(spec: ProblemSpec, block: DesignBlock, free: np.ndarray, method: str,
                   cfg: AppConfig, beta: float) -> Callable[[np.ndarray], np.ndarray]:
    """x -> constraint values c (one per eigenvalue for LA, one for SLA); +inf = no constraint."""
    shape = (block.B_o.shape[1], block.C_o.shape[0])
    n = spec.n

    def la(x: np.ndarray) -> np.ndarray:
        A_o = apply_structured(spec.A, block.B_o, block.C_o, _scatter(x, free, shape))
        try:
            bundle = bundle_from_matrices(A_o, spec.B, spec.C, spec.S, tol_feas=cfg.tol_feas(spec.B, spec.C),
                                          simplicity_tol=cfg.simplicity_tol(A_o))
        except NumericError:
            # eigenvalue collision: treat as fully violated at this point
            return np.zeros(n)
        c = np.full(n, np.inf)
        for k in bundle.feasible:
            c[k] = -bundle.real_parts[k] / bundle.masked_norms[k]
        return c

    def sla(x: np.ndarray) -> np.ndarray:
        A_o = apply_structured(spec.A, block.B_o, block.C_o, _scatter(x, free, shape))
        try:
            return np.array([sr_sla_value(A_o, spec, cfg, refine_tol=cfg.design_refine_tol, beta=beta)])
        except StabRadError:
            return np.array([0.0])

    return la if method == "la" else sla


def _violation(c: np.ndarray, epsilon: float) -> np.ndarray:
    return np.maximum(0.0, epsilon - c)


def _fd_grad(fun: Callable[[np.ndarray], float], x: np.ndarray, rel_step: float) -> np.ndarray:
    g = np.zeros_like(x)
    for i in range(x.size):
        h = rel_step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (fun(xp) - fun(xm)) / (2.0 * h)
    return g


def _fd_jac(fun: Callable[[np.ndarray], np.ndarray], x: np.ndarray, rel_step: float) -> np.ndarray:
    cols = []
    for i in range(x.size):
        h = rel_step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        cols.append((fun(xp) - fun(xm)) / (2.0 * h))
    return np.stack(cols, axis=1)


def _solve_from(x0: np.ndarray, cons: _Evaluator, epsilon: float, solver: DesignSolverConfig,
                tag: str) -> _RestartResult:
    x = np.array(x0, dtype=float)
    rho = solver.rho0
    iterations = 0
    penalty = 0.0
    try:
        for rnd in range(solver.penalty_rounds):
            def objective(z: np.ndarray, rho=rho) -> float:
                v = _violation(cons(z), epsilon)
                return float(z @ z + rho * (v @ v))

            res = minimize(objective, x, method="BFGS",
                           jac=lambda z, f=objective: _fd_grad(f, z, solver.fd_rel_step),
                           options={"maxiter": solver.inner_maxiter, "gtol": 1e-10})
            x = res.x
            iterations += int(res.nit)
            v = _violation(cons(x), epsilon)
            penalty = float(rho * (v @ v))
            say("design", f"{tag} round {rnd + 1}/{solver.penalty_rounds} rho={rho:.1e} "
                          f"norm={np.linalg.norm(x):.6g} viol={float(np.max(v, initial=0.0)):.3e}")
            rho *= solver.rho_growth

        viol = float(np.max(_violation(cons(x), epsilon), initial=0.0))
        if solver.polish and viol > solver.constraint_tol:
            def finite_cons(z: np.ndarray) -> np.ndarray:
                c = cons(z)
                # capped: SLSQP needs a fixed-length, finite constraint vector
                return np.minimum(c, 1e3 * max(1.0, epsilon)) - epsilon

            res = minimize(lambda z: float(z @ z), x, jac=lambda z: 2.0 * z, method="SLSQP",
                           constraints=[{"type": "ineq", "fun": finite_cons,
                                         "jac": lambda z: _fd_jac(finite_cons, z, solver.fd_rel_step)}],
                           options={"maxiter": solver.inner_maxiter, "ftol": 1e-14})
            v_new = float(np.max(_violation(cons(res.x), epsilon), initial=0.0))
            iterations += int(res.nit)
            if v_new < viol:
                x, viol = res.x, v_new
            say("design", f"{tag} polish norm={np.linalg.norm(x):.6g} viol={viol:.3e}")
    except _BudgetExhausted:
        x, viol = cons.best()
        say("design", f"{tag} stopped after {cons.count} evaluations; best norm={np.linalg.norm(x):.6g} "
                      f"viol={viol:.3e}")

    return _RestartResult(
        x=x,
        norm=float(np.linalg.norm(x)),
        violation=viol,
        penalty=penalty,
        iterations=iterations,
        converged=viol <= solver.constraint_tol,
    )


def _la_warm_start(spec: ProblemSpec, epsilon: float, cfg: AppConfig, free: np.ndarray) -> Optional[np.ndarray]:
    """Free entries of the SD_la optimum, the first SD_sla start."""
    try:
        rep = solve_design(spec, epsilon, cfg, method="la")
    except NotConverged as e:
        rep = e.report
    except StabRadError as e:
        say("design", f"no SD_la warm start: {e}")
        return None
    return np.array(rep.delta_o_star[free[:, 0], free[:, 1]], dtype=float)


def solve_design(spec: ProblemSpec, epsilon: Optional[float], cfg: Optional[AppConfig] = None,
                 method: str = "la") -> DesignReport:
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    cfg = cfg or AppConfig()
    block = resolve_design(spec, epsilon)
    if block.epsilon is None or not block.epsilon > 0:
        raise ValueError(f"epsilon must be a positive number, got {block.epsilon}")
    eps = float(block.epsilon)
    solver = cfg.design_config(method)
    beta = cfg.design_beta_fraction * eps

    free = np.argwhere(block.S_o == 1.0)
    shape = (block.B_o.shape[1], block.C_o.shape[0])
    other = "sla" if method == "la" else "la"

    # the method's own SR at the nominal matrix must be computable; +inf (nothing shiftable) meets any target
    current = _approx_sr(spec.A, spec, cfg, method, beta)
    base = {method: current, other: _approx_sr_or_none(spec.A, spec, cfg, other, beta)}
    settings = {**asdict(solver), "refine_tol": cfg.design_refine_tol, "sla_beta": beta}

    if current >= eps:
        say("design", f"{spec.name}: target {eps:.6g} already met (SR_{method} = {current:.6g})")
        return DesignReport(
            problem=spec.name, method=method, epsilon=eps, delta_o_star=np.zeros(shape), norm=0.0,
            achieved_sr_la=base["la"], achieved_sr_sla=base["sla"],
            initial_sr=current, target_already_met=True,
            solver={"iterations": 0, "restarts": 0, "evaluations": 0, "final_penalty": 0.0, "converged": True,
                    "max_violation": 0.0, "settings": settings},
        )

    f = free.shape[0]
    if f == 0:
        raise ValueError("design mask So has no free entries")
    rng = np.random.default_rng(solver.seed)
    starts = [np.zeros(f)]
    for _ in range(solver.restarts - 1):
        g = rng.standard_normal(f)
        nrm = np.linalg.norm(g)
        starts.append(g * (solver.start_scale * eps / nrm) if nrm > 0 else g)
    if method == "sla":
        warm = _la_warm_start(spec, eps, cfg, free)
        if warm is not None:
            starts.insert(0, warm)

    cons = _Evaluator(_constraint_fn(spec, block, free, method, cfg, beta), eps, solver.constraint_tol,
                      solver.max_evals)
    results: List[_RestartResult] = []
    for i, x0 in enumerate(starts):
        if cons.exhausted:
            break
        results.append(_solve_from(x0, cons, eps, solver, tag=f"restart {i + 1}/{len(starts)}"))

    ok = [r for r in results if r.converged]
    if ok:
        best = min(ok, key=lambda r: (r.norm, r.violation))
        if cons.best_feasible is not None and cons.best_feasible[0] < best.norm:
            x, viol = cons.best()
            best = _RestartResult(x=x, norm=float(np.linalg.norm(x)), violation=viol, penalty=best.penalty,
                                  iterations=0, converged=True)
    else:
        best = min(results, key=lambda r: (r.violation, r.norm))

    delta_o = _scatter(best.x, free, shape)
    A_o = apply_structured(spec.A, block.B_o, block.C_o, delta_o)
    achieved = {m: _approx_sr_or_none(A_o, spec, cfg, m, beta) for m in METHODS}
    met = achieved[method] is not None and achieved[method] >= eps - solver.constraint_tol
    report = DesignReport(
        problem=spec.name,
        method=method,
        epsilon=eps,
        delta_o_star=delta_o,
        norm=float(np.linalg.norm(delta_o)),
        achieved_sr_la=achieved["la"],
        achieved_sr_sla=achieved["sla"],
        initial_sr=current,
        solver={
            "iterations": int(sum(r.iterations for r in results)),
            "restarts": len(results),
            "converged_restarts": len(ok),
            "evaluations": cons.count,
            "final_penalty": best.penalty,
            "converged": bool(ok) and met,
            "max_violation": best.violation,
            "settings": settings,
        },
    )
    say("design", f"{spec.name}: ||Delta_o*|| = {report.norm:.6g} converged={report.converged} "
                  f"({cons.count} evaluations)")
    if not report.converged:
        raise NotConverged(f"no restart reached SR_{method} >= {eps:.6g} - {solver.constraint_tol:g} "
                           f"(best violation {best.violation:.3e}, achieved {achieved[method]})", report)
    return report


def solve_sd_la(spec: ProblemSpec, epsilon: Optional[float] = None, cfg: Optional[AppConfig] = None) -> DesignReport:
    return solve_design(spec, epsilon, cfg, method="la")


def solve_sd_sla(spec: ProblemSpec, epsilon: Optional[float] = None, cfg: Optional[AppConfig] = None) -> DesignReport:
    return solve_design(spec, epsilon, cfg, method="sla")


def redesigned_sr_oracle(spec: ProblemSpec, report: DesignReport, cfg: Optional[AppConfig] = None) -> float:
    """Grid-search SR of A + B_o Delta_o* C_o under the analysis structure (B, C, S)."""
    cfg = cfg or AppConfig()
    block = resolve_design(spec, report.epsilon)
    A_o = apply_structured(spec.A, block.B_o, block.C_o, report.delta_o_star)
    try:
        return sr_oracle(spec.with_nominal(A_o), cfg.grid_points, cfg.bisect_tol, cfg)
    except NoUpperBound:
        return math.inf


def design_sweep(spec: ProblemSpec, epsilons: Sequence[float], cfg: Optional[AppConfig] = None,
                 method: str = "la", with_oracle: Optional[bool] = None) -> List[Dict[str, Any]]:
    """
    norm of Delta_o* and achieved SR against the target, one row per epsilon. The
    grid-search SR of each redesigned matrix is added when the mask S has at most
    max_free_entries free entries (with_oracle=None), or as forced by with_oracle.
    """
    cfg = cfg or AppConfig()
    if with_oracle is None:
        with_oracle = free_entries(spec.S).shape[0] <= cfg.max_free_entries
    rows: List[Dict[str, Any]] = []
    for eps in epsilons:
        try:
            rep = solve_design(spec, eps, cfg, method=method)
        except NotConverged as e:
            rep = e.report
        rows.append({
            "epsilon": float(eps),
            "norm": rep.norm,
            "achieved_sr_la": rep.achieved_sr_la,
            "achieved_sr_sla": rep.achieved_sr_sla,
            "sr_oracle": redesigned_sr_oracle(spec, rep, cfg) if with_oracle else None,
            "converged": rep.converged,
        })
    return rows
