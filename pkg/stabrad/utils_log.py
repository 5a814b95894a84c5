import os
import sys
import json
from datetime import datetime, timezone
from typing import Any, Optional

from .utils_paths import ensure_dir

_VERBOSE = False


def set_verbose(flag: bool) -> None:
    global _VERBOSE
    _VERBOSE = bool(flag)


def say(tag: str, msg: str) -> None:
    if _VERBOSE:
        print(f"[{tag}] {msg}", file=sys.stderr, flush=True)


def now_iso() -> str:
    return datetime.now(timezone.utc).astimezone().isoformat()


def append_jsonl(path: str, obj: dict) -> None:
    ensure_dir(os.path.dirname(path))
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(obj, ensure_ascii=False) + "\n")


def log_event(session_log_file: Optional[str], event_type: str, **payload: Any) -> None:
    """Session log only; report files never carry timestamps."""
    if not session_log_file:
        return
    append_jsonl(session_log_file, {"type": event_type, "ts": now_iso(), **payload})
