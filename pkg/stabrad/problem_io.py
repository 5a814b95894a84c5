"""
Problem files: a JSON document

{
  "name": "case1",
  "A": [[...], ...], "B": [[...]], "C": [[...]], "S": [[0/1, ...]],
  "design": {"Bo": ..., "Co": ..., "So": ..., "epsilon": 0.6},     (optional)
  "config": {"grid_points": 61, ...},                                (optional AppConfig overrides)
  "sla": {"beta": 0.01}, "solver": {"restarts": 3}                   (SLA / design keys only)
}

Unknown keys anywhere are rejected.
"""
import json
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from .config import ConfigOverrides, SLAOverrides, SolverOverrides
from .errors import ParseError
from .services.perturbation_model import ProblemSpec, spec_from_arrays
from .utils_paths import write_text_atomic

Matrix = List[List[float]]


def _check_rect(v: Matrix) -> Matrix:
    if not v or not v[0]:
        raise ValueError("must be a non-empty 2-D array")
    width = len(v[0])
    for i, row in enumerate(v):
        if len(row) != width:
            raise ValueError(f"row {i} has {len(row)} entries, expected {width}")
    return v


def _check_binary(v: Optional[Matrix]) -> Optional[Matrix]:
    if v is None:
        return v
    for row in v:
        for x in row:
            if x not in (0, 1):
                raise ValueError(f"mask entries must be 0 or 1, got {x}")
    return v


class DesignModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    Bo: Optional[Matrix] = None
    Co: Optional[Matrix] = None
    So: Optional[Matrix] = None
    epsilon: Optional[float] = None

    @field_validator("Bo", "Co", "So")
    @classmethod
    def check_rect(cls, v):
        return v if v is None else _check_rect(v)

    @field_validator("So")
    @classmethod
    def check_binary(cls, v):
        return _check_binary(v)

    @field_validator("epsilon")
    @classmethod
    def check_positive(cls, v):
        if v is not None and not v > 0:
            raise ValueError("epsilon must be > 0")
        return v


class ProblemModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    A: Matrix
    B: Matrix
    C: Matrix
    S: Matrix
    design: Optional[DesignModel] = None
    config: Optional[ConfigOverrides] = None
    sla: Optional[SLAOverrides] = None
    solver: Optional[SolverOverrides] = None

    @field_validator("A", "B", "C", "S")
    @classmethod
    def check_rect(cls, v):
        return _check_rect(v)

    @field_validator("S")
    @classmethod
    def check_binary(cls, v):
        return _check_binary(v)


def _line_of(text: str, key: str) -> Optional[int]:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return None


def loads_problem(text: str) -> Tuple[ProblemSpec, Dict[str, Any]]:
    """Parse + validate problem text. Returns (spec, config overrides)."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed problem file: {e.msg}", line=e.lineno) from e
    if not isinstance(raw, dict):
        raise ParseError("problem file must contain a JSON object")
    try:
        model = ProblemModel.model_validate(raw)
    except ValidationError as e:
        err = e.errors()[0]
        loc = ".".join(str(p) for p in err.get("loc", ()))
        top = str(err["loc"][0]) if err.get("loc") else None
        msg = "missing required field" if err.get("type") == "missing" else err.get("msg", "invalid value")
        raise ParseError(msg, field=loc or None, line=_line_of(text, top) if top else None) from e

    design = None
    if model.design is not None:
        design = model.design.model_dump()
    spec = spec_from_arrays(model.name, model.A, model.B, model.C, model.S, design=design)
    overrides: Dict[str, Any] = {}
    for block in (model.config, model.sla, model.solver):
        if block is not None:
            overrides.update(block.model_dump(exclude_unset=True))
    return spec, overrides


def parse_problem(path: str) -> Tuple[ProblemSpec, Dict[str, Any]]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ParseError(f"cannot read problem file {path}: {e.strerror}") from e
    return loads_problem(text)


def load_spec(path: str) -> ProblemSpec:
    return parse_problem(path)[0]


def _mat(a: np.ndarray) -> List[List[float]]:
    return [[float(x) for x in row] for row in np.asarray(a)]


def _mask(a: np.ndarray) -> List[List[int]]:
    return [[int(x) for x in row] for row in np.asarray(a)]


def problem_to_dict(spec: ProblemSpec, config: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    out: Dict[str, Any] = {
        "name": spec.name,
        "A": _mat(spec.A),
        "B": _mat(spec.B),
        "C": _mat(spec.C),
        "S": _mask(spec.S),
    }
    if spec.design is not None:
        d = spec.design
        out["design"] = {"Bo": _mat(d.B_o), "Co": _mat(d.C_o), "So": _mask(d.S_o)}
        if d.epsilon is not None:
            out["design"]["epsilon"] = float(d.epsilon)
    if config:
        out["config"] = dict(config)
    return out


def serialize_problem(spec: ProblemSpec, config: Optional[Dict[str, Any]] = None) -> str:
    # json uses repr() for floats: shortest round-trip text, bit-exact on reload
    return json.dumps(problem_to_dict(spec, config), indent=2) + "\n"


def write_problem(path: str, spec: ProblemSpec, config: Optional[Dict[str, Any]] = None) -> str:
    return write_text_atomic(path, serialize_problem(spec, config))
