import os
import tempfile


def ensure_dir(path: str) -> None:
    if path and not os.path.exists(path):
        os.makedirs(path)


def write_text_atomic(path: str, text: str) -> str:
    """Write via temp file + rename so readers never see a half-written artifact."""
    path = os.path.abspath(path)
    out_dir = os.path.dirname(path)
    ensure_dir(out_dir)
    fd, tmp = tempfile.mkstemp(prefix=".tmp_", suffix=os.path.splitext(path)[1], dir=out_dir)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return path


def problems_dir() -> str:
    return os.path.abspath(os.path.join(os.path.dirname(__file__), "..", "problems"))


def bundled_problem(name: str) -> str:
    """'case1' -> <project_root>/problems/case1.json"""
    fn = name if name.endswith(".json") else f"{name}.json"
    return os.path.join(problems_dir(), fn)
