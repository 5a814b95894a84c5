import copy
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, Optional
import os
import json
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, StrictBool, StrictInt, ValidationError

from .errors import ParseError

_BASE_DIR = Path(__file__).resolve().parent

# runtime-only fields, never echoed into reports
_RUNTIME_FIELDS = {"config_file", "session_log_file", "verbose"}


def _default_config_file() -> str:
    """
    Priority:
      1) STABRAD_CONFIG
      2) <project_root>/stabrad_config.json
    """
    env = os.getenv("STABRAD_CONFIG")
    if env:
        return os.path.abspath(os.path.expanduser(env))
    return os.path.abspath(os.path.join(_BASE_DIR, "..", "stabrad_config.json"))


def _default_session_log_file() -> Optional[str]:
    env = os.getenv("STABRAD_SESSION_LOG")
    if env:
        return os.path.abspath(os.path.expanduser(env))
    return None


def _load_json(path: str) -> dict:
    try:
        if path and os.path.exists(path):
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
                return data if isinstance(data, dict) else {}
    except Exception:
        pass
    return {}


# ---------- override schemas ----------
# Fields left unset are not overrides; defaults live on AppConfig only.

class SLAOverrides(BaseModel):
    """The `sla` block of a problem file."""
    model_config = ConfigDict(extra="forbid")

    beta: Optional[float] = None
    beta_fraction: float = None
    beta_growth: float = None
    max_beta_growths: StrictInt = None
    repair_noise: Optional[float] = None
    max_repairs: StrictInt = None
    max_iters: StrictInt = None
    refine_final: StrictBool = None
    refine_tol: float = None
    crossing_walk: StrictBool = None
    seed: StrictInt = None


class SolverOverrides(BaseModel):
    """The `solver` block of a problem file."""
    model_config = ConfigDict(extra="forbid")

    restarts: StrictInt = None
    rho0: float = None
    rho_growth: float = None
    penalty_rounds: StrictInt = None
    fd_rel_step: float = None
    constraint_tol: float = None
    inner_maxiter: StrictInt = None
    start_scale: float = None
    design_refine_tol: float = None
    design_beta_fraction: float = None
    sla_design_max_evals: StrictInt = None
    polish: StrictBool = None
    seed: StrictInt = None


class ConfigOverrides(SLAOverrides, SolverOverrides):
    """Every tunable AppConfig field: the `config` block, the overlay file and CLI flags."""
    model_config = ConfigDict(extra="forbid")

    simplicity_rel_tol: float = None
    feas_rel_tol: float = None
    grid_points: StrictInt = None
    boundary_samples: StrictInt = None
    bisect_tol: float = None
    max_free_entries: StrictInt = None
    gamma_cap: float = None
    sweep_steps: StrictInt = None


def validate_overrides(values: Dict[str, Any], schema: type = ConfigOverrides) -> Dict[str, Any]:
    """Typed override values, only the keys actually given. Raises ParseError naming the key."""
    try:
        parsed = schema.model_validate(values)
    except ValidationError as e:
        err = e.errors()[0]
        loc = ".".join(str(p) for p in err.get("loc", ()))
        msg = "unknown config key" if err.get("type") == "extra_forbidden" else err.get("msg", "invalid value")
        raise ParseError(msg, field=loc or None) from e
    return parsed.model_dump(exclude_unset=True)


@dataclass(frozen=True)
class SLAConfig:
    beta: float
    beta_growth: float
    repair_noise: float
    max_iters: int
    refine_final: bool
    refine_tol: float
    simplicity_tol: float
    tol_feas: float
    seed: int
    max_beta_growths: int = 40
    max_repairs: int = 20
    crossing_walk: bool = True

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not self.beta_growth > 1:
            raise ValueError(f"beta_growth must be > 1, got {self.beta_growth}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.repair_noise < 0:
            raise ValueError(f"repair_noise must be >= 0, got {self.repair_noise}")


@dataclass(frozen=True)
class DesignSolverConfig:
    restarts: int
    rho0: float
    rho_growth: float
    penalty_rounds: int
    fd_rel_step: float
    constraint_tol: float
    inner_maxiter: int
    start_scale: float
    seed: int
    polish: bool = True
    max_evals: Optional[int] = None


@dataclass
class AppConfig:
    # ---------- runtime ----------
    config_file: str = field(default_factory=_default_config_file)
    session_log_file: Optional[str] = field(default_factory=_default_session_log_file)
    verbose: bool = False

    # ---------- tolerances ----------
    simplicity_rel_tol: float = 1e-8
    feas_rel_tol: float = 1e-9

    # ---------- sla ----------
    beta: Optional[float] = None          # None -> beta_fraction * max(1e-3, -alpha(A))
    beta_fraction: float = 0.05
    beta_growth: float = 1.5
    max_beta_growths: int = 40
    repair_noise: Optional[float] = None  # None -> 1e-8 * ||A||
    max_repairs: int = 20
    max_iters: int = 10000
    refine_final: bool = False
    refine_tol: float = 1e-8
    crossing_walk: bool = True            # also walk the determinant onto a real crossing at 0
    seed: int = 0

    # ---------- oracle ----------
    grid_points: int = 41
    boundary_samples: int = 720
    bisect_tol: float = 1e-6
    max_free_entries: int = 4
    gamma_cap: float = 1e6

    # ---------- design ----------
    restarts: int = 5
    rho0: float = 10.0
    rho_growth: float = 10.0
    penalty_rounds: int = 5
    fd_rel_step: float = 1e-6
    constraint_tol: float = 1e-6
    inner_maxiter: int = 200
    start_scale: float = 0.1
    design_refine_tol: float = 1e-10
    design_beta_fraction: float = 0.01    # SR_sla step inside the design constraint: fraction * epsilon
    sla_design_max_evals: int = 1500      # SR_sla constraint evaluations per SD_sla solve
    polish: bool = True

    # ---------- sweep ----------
    sweep_steps: int = 21

    def __post_init__(self):
        self.config_file = os.path.abspath(os.path.expanduser(self.config_file))
        if self.session_log_file:
            self.session_log_file = os.path.abspath(os.path.expanduser(self.session_log_file))

        # stabrad_config.json (optional); unknown keys are ignored here so an old
        # overlay file never blocks a run
        overlay = _load_json(self.config_file)
        known = {k: v for k, v in overlay.items() if k in ConfigOverrides.model_fields}
        for key, value in validate_overrides(known).items():
            setattr(self, key, value)

    def with_overrides(self, overrides: Optional[Dict[str, Any]]) -> "AppConfig":
        if not overrides:
            return self
        changes = validate_overrides(overrides)
        # copy, not dataclasses.replace: __post_init__ would re-apply the file overlay
        out = copy.copy(self)
        for key, value in changes.items():
            setattr(out, key, value)
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if k not in _RUNTIME_FIELDS}

    # ---------- resolved per-problem settings ----------

    def simplicity_tol(self, A: np.ndarray) -> float:
        return self.simplicity_rel_tol * max(1.0, float(np.linalg.norm(A, "fro")))

    def tol_feas(self, B: np.ndarray, C: np.ndarray) -> float:
        return self.feas_rel_tol * (1.0 + float(np.linalg.norm(B, "fro")) * float(np.linalg.norm(C, "fro")))

    def sla_config(self, A: np.ndarray, B: np.ndarray, C: np.ndarray, alpha: float,
                   refine_final: Optional[bool] = None, refine_tol: Optional[float] = None,
                   beta: Optional[float] = None) -> SLAConfig:
        if beta is None:
            beta = self.beta
        if beta is None:
            beta = self.beta_fraction * max(1e-3, -alpha)
        noise = self.repair_noise
        if noise is None:
            noise = 1e-8 * float(np.linalg.norm(A, "fro"))
        return SLAConfig(
            beta=float(beta),
            beta_growth=float(self.beta_growth),
            repair_noise=float(noise),
            max_iters=int(self.max_iters),
            refine_final=self.refine_final if refine_final is None else bool(refine_final),
            refine_tol=float(self.refine_tol if refine_tol is None else refine_tol),
            simplicity_tol=self.simplicity_tol(A),
            tol_feas=self.tol_feas(B, C),
            seed=int(self.seed),
            max_beta_growths=int(self.max_beta_growths),
            max_repairs=int(self.max_repairs),
            crossing_walk=bool(self.crossing_walk),
        )

    def design_config(self, method: str = "la") -> DesignSolverConfig:
        return DesignSolverConfig(
            restarts=max(1, int(self.restarts)),
            rho0=float(self.rho0),
            rho_growth=float(self.rho_growth),
            penalty_rounds=max(1, int(self.penalty_rounds)),
            fd_rel_step=float(self.fd_rel_step),
            constraint_tol=float(self.constraint_tol),
            inner_maxiter=int(self.inner_maxiter),
            start_scale=float(self.start_scale),
            seed=int(self.seed),
            polish=bool(self.polish),
            max_evals=max(1, int(self.sla_design_max_evals)) if method == "sla" else None,
        )
