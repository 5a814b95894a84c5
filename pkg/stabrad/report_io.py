"""
Report, trace and sweep serialization.

Report files are JSON; floats go through repr() (shortest text that reloads bit-exact).
CSV cells use %.17g. Neither carries timestamps, so identical inputs give identical bytes.
"""
import csv
import io
import json
import math
from dataclasses import asdict, is_dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .pipelines.design_pipeline import DesignReport
from .pipelines.sr_la_pipeline import SRReport
from .utils_paths import write_text_atomic

SWEEP_COLUMNS = ["gamma", "alpha_exact", "alpha_la", "alpha_sla", "e_la", "e_sla"]
TRACE_COLUMNS = ["iteration", "walk", "k", "step_norm", "beta", "alpha", "cumulative_norm", "repairs"]
STUDY_COLUMNS = ["index", "normality_gap", "gamma", "alpha_exact", "alpha_la", "alpha_sla", "e_la", "e_sla"]
DESIGN_SWEEP_COLUMNS = ["epsilon", "norm", "achieved_sr_la", "achieved_sr_sla", "sr_oracle", "converged"]


def to_jsonable(x: Any) -> Any:
    if x is None or isinstance(x, (bool, str)):
        return x
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(x, (complex, np.complexfloating)):
        return [to_jsonable(x.real), to_jsonable(x.imag)]
    if isinstance(x, np.ndarray):
        return to_jsonable(x.tolist())
    if is_dataclass(x) and not isinstance(x, type):
        return to_jsonable(asdict(x))
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    return str(x)


def sr_report_to_dict(report: SRReport, config: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    out: Dict[str, Any] = {
        "problem": report.problem,
        "method": report.method,
        "status": report.status,
        "value": report.value,
        "argmin_k": report.argmin_k,
        "alpha_nominal": report.alpha_nominal,
        "alpha_final": report.alpha_final,
        "delta_star": report.delta_star,
    }
    if report.method == "la":
        out["candidates"] = [
            {"k": c.k, "eigenvalue": c.eigenvalue, "value": c.value, "delta": c.delta}
            for c in report.candidates
        ]
    if report.trace is not None:
        out["iterations"] = len(report.trace)
        out["trace"] = [trace_row(rec) for rec in report.trace]
    out["settings"] = dict(report.settings)
    if config is not None:
        out["config"] = dict(config)
    return to_jsonable(out)


def design_report_to_dict(report: DesignReport, config: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    out: Dict[str, Any] = {
        "problem": report.problem,
        "method": report.method,
        "epsilon": report.epsilon,
        "delta_o_star": report.delta_o_star,
        "norm": report.norm,
        "achieved_sr_la": report.achieved_sr_la,
        "achieved_sr_sla": report.achieved_sr_sla,
        "initial_sr": report.initial_sr,
        "target_already_met": report.target_already_met,
        "converged": report.converged,
        "solver": report.solver,
    }
    if config is not None:
        out["config"] = dict(config)
    return to_jsonable(out)


def dumps_report(obj: Dict[str, Any]) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def write_report(path: str, obj: Dict[str, Any]) -> str:
    return write_text_atomic(path, dumps_report(obj))


def trace_row(rec: Any) -> Dict[str, Any]:
    tags = list(rec.repairs) + (["refined"] if rec.refined else [])
    return {
        "iteration": rec.iteration,
        "walk": rec.walk,
        "k": rec.k,
        "step_norm": rec.step_norm,
        "beta": rec.beta,
        "alpha": rec.alpha,
        "cumulative_norm": rec.cumulative_norm,
        "repairs": "+".join(tags),
    }


# ---------- csv ----------

def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def rows_to_csv(rows: Iterable[Dict[str, Any]], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def sweep_columns(with_oracle: bool) -> List[str]:
    if with_oracle:
        return list(SWEEP_COLUMNS)
    return [c for c in SWEEP_COLUMNS if c not in ("alpha_exact", "e_la", "e_sla")]


def write_sweep_csv(path: str, rows: List[Dict[str, Any]], with_oracle: bool) -> str:
    return write_text_atomic(path, rows_to_csv(rows, sweep_columns(with_oracle)))


def write_trace_csv(path: str, trace: List[Any]) -> str:
    return write_text_atomic(path, rows_to_csv((trace_row(r) for r in trace), TRACE_COLUMNS))


def write_study_csv(path: str, rows: List[Dict[str, Any]]) -> str:
    return write_text_atomic(path, rows_to_csv(rows, STUDY_COLUMNS))


def write_design_sweep_csv(path: str, rows: List[Dict[str, Any]]) -> str:
    return write_text_atomic(path, rows_to_csv(rows, DESIGN_SWEEP_COLUMNS))
