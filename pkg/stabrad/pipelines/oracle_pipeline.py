"""
Desk-scale ground truth: exhaustive grid search of the perturbed spectral abscissa
over the Frobenius ball of free (masked) entries, a bisection reference SR built
on it, and the approximation errors of the LA / SLA abscissa models.
"""
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from ..config import AppConfig
from ..errors import InvalidGamma, NoUpperBound, NumericError, TooManyFreeEntries
from ..services.matrix_core import normality_gap, spectral_abscissa, spectral_abscissa_batch
from ..services.perturbation_model import ProblemSpec
from ..services.sensitivity import build_sensitivities, linearized_abscissa
from ..tools.random_specs import random_stable_spec
from ..utils_log import say
from .sr_sla_pipeline import alpha_sla_sweep

_CHUNK = 50_000


def free_entries(S: np.ndarray) -> np.ndarray:
    """(f, 2) row-major indices of the entries the mask leaves free."""
    return np.argwhere(S == 1.0)


def _sphere_directions(f: int, count: int) -> np.ndarray:
    if f == 1:
        return np.array([[1.0], [-1.0]])
    if f == 2:
        th = np.linspace(0.0, 2.0 * np.pi, max(4, count), endpoint=False)
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    # fixed seed: the oracle must be deterministic
    g = np.random.default_rng(0).standard_normal((max(2 * f, count), f))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _max_alpha(spec: ProblemSpec, free: np.ndarray, pts: np.ndarray) -> float:
    best = -np.inf
    for start in range(0, pts.shape[0], _CHUNK):
        chunk = pts[start:start + _CHUNK]
        deltas = np.zeros((chunk.shape[0], spec.m, spec.p))
        deltas[:, free[:, 0], free[:, 1]] = chunk
        mats = spec.A[None, :, :] + np.einsum("im,kmp,pj->kij", spec.B, deltas, spec.C)
        best = max(best, float(np.max(spectral_abscissa_batch(mats))))
    return best


def alpha_grid(spec: ProblemSpec, gamma: float, points_per_axis: int = 41,
               boundary_samples: int = 720, max_free_entries: int = 4) -> float:
    """max alpha(A + B Delta C) over gridded Delta with ||Delta|| <= gamma and S^c o Delta = 0."""
    if gamma < 0:
        raise InvalidGamma(f"gamma must be >= 0, got {gamma}")
    if points_per_axis < 3:
        raise ValueError(f"points_per_axis must be >= 3, got {points_per_axis}")
    free = free_entries(spec.S)
    f = free.shape[0]
    if f > max_free_entries:
        raise TooManyFreeEntries(f"mask has {f} free entries; the grid oracle supports at most {max_free_entries}")

    alpha0 = spectral_abscissa(spec.A)
    if gamma == 0 or f == 0:
        return alpha0

    axis = np.linspace(-gamma, gamma, points_per_axis)
    shape = (points_per_axis,) * f
    total = points_per_axis ** f
    best = alpha0
    limit = gamma * (1.0 + 1e-12)
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(total, start + _CHUNK))
        cube = axis[np.stack(np.unravel_index(idx, shape), axis=1)]
        r = np.linalg.norm(cube, axis=1)
        inside = cube[r <= limit]
        nz = r > 0
        radial = cube[nz] * (gamma / r[nz])[:, None]
        best = max(best, _max_alpha(spec, free, np.vstack([inside, radial])))

    best = max(best, _max_alpha(spec, free, gamma * _sphere_directions(f, boundary_samples)))
    return best


def sr_oracle(spec: ProblemSpec, points_per_axis: int = 41, bisect_tol: float = 1e-6,
              cfg: Optional[AppConfig] = None) -> float:
    """Smallest gamma with alpha_grid(gamma) >= 0, by doubling then bisection."""
    cfg = cfg or AppConfig()

    def crosses(g: float) -> bool:
        return alpha_grid(spec, g, points_per_axis, cfg.boundary_samples, cfg.max_free_entries) >= 0.0

    alpha0 = spectral_abscissa(spec.A)
    if alpha0 >= 0:
        return 0.0
    if free_entries(spec.S).shape[0] > cfg.max_free_entries:
        raise TooManyFreeEntries(f"mask has more than {cfg.max_free_entries} free entries")

    try:
        bundle = build_sensitivities(spec, tol_feas=cfg.tol_feas(spec.B, spec.C),
                                     simplicity_tol=cfg.simplicity_tol(spec.A))
        top = float(np.max(bundle.masked_norms)) if bundle.feasible else 0.0
    except NumericError:
        top = 0.0
    hi = -alpha0 / top if top > 0 else max(-alpha0, 1e-3)
    lo = 0.0
    while not crosses(hi):
        lo, hi = hi, 2.0 * hi
        if hi > cfg.gamma_cap:
            raise NoUpperBound(f"no destabilizing perturbation found up to gamma={cfg.gamma_cap:g}")
    while hi - lo > bisect_tol:
        mid = 0.5 * (lo + hi)
        if crosses(mid):
            hi = mid
        else:
            lo = mid
    out = 0.5 * (lo + hi)
    say("oracle", f"{spec.name}: SR_oracle = {out:.10g} (grid {points_per_axis}, tol {bisect_tol:g})")
    return out


def approximation_errors(spec: ProblemSpec, cfg: Optional[AppConfig], gamma_grid: Sequence[float],
                         with_oracle: bool = True,
                         points_per_axis: Optional[int] = None) -> List[Dict[str, Any]]:
    """Rows of gamma, alpha_la, alpha_sla and, with the oracle, alpha_exact, e_la, e_sla."""
    cfg = cfg or AppConfig()
    ppa = points_per_axis or cfg.grid_points
    bundle = build_sensitivities(spec, tol_feas=cfg.tol_feas(spec.B, spec.C),
                                 simplicity_tol=cfg.simplicity_tol(spec.A))
    sla = alpha_sla_sweep(spec, cfg, gamma_grid)

    rows: List[Dict[str, Any]] = []
    for g, a_sla in sla:
        a_la, _k = linearized_abscissa(bundle, g)
        row: Dict[str, Any] = {"gamma": g}
        if with_oracle:
            a = alpha_grid(spec, g, ppa, cfg.boundary_samples, cfg.max_free_entries)
            row["alpha_exact"] = a
        row["alpha_la"] = a_la
        row["alpha_sla"] = a_sla
        if with_oracle:
            row["e_la"] = abs(row["alpha_exact"] - a_la)
            row["e_sla"] = abs(row["alpha_exact"] - a_sla)
        rows.append(row)
        say("sweep", f"gamma={g:.4g} alpha_la={a_la:.6g} alpha_sla={a_sla:.6g}"
                     + (f" alpha={row['alpha_exact']:.6g}" if with_oracle else ""))
    return rows


def normality_study(cfg: Optional[AppConfig] = None, count: int = 200, n: int = 5, m: int = 2, p: int = 2,
                    gamma: float = 10.0, seed: int = 0,
                    points_per_axis: Optional[int] = None) -> List[Dict[str, Any]]:
    """
    Random triplets (A, B, C) with a diagonal mask: normality gap against the LA / SLA
    abscissa errors at a single budget gamma.
    """
    cfg = cfg or AppConfig()
    rng = np.random.default_rng(seed)
    mask = np.eye(m, p)
    rows: List[Dict[str, Any]] = []
    for i in range(count):
        spec = random_stable_spec(rng, n, m, p, mask=mask, name=f"random_{i:03d}")
        row = approximation_errors(spec, cfg, [gamma], with_oracle=True, points_per_axis=points_per_axis)[0]
        rows.append({"index": i, "normality_gap": normality_gap(spec.A), **row})
        say("study", f"{i + 1}/{count} NG={rows[-1]['normality_gap']:.4g} "
                     f"e_la={row['e_la']:.4g} e_sla={row['e_sla']:.4g}")
    return rows
