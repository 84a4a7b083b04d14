"""Report writing: canonical JSON/CSV, failure markers, and the timing sidecar.

Reports are byte-identical across reruns with the same inputs and seed; wall
clock data lives only in the run_info sidecar so it never breaks that
guarantee.
"""

from __future__ import annotations

import datetime
import json
from pathlib import Path

import numpy as np

REPORT_SCHEMA_VERSION = 1
FAILURE_MARKER = "FAILED"
RUN_INFO = "run_info.json"


def to_jsonable(value):
    """Recursively convert numpy scalars/arrays so json can serialize them."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def write_json_report(path: Path, payload: dict) -> None:
    body = {"schema_version": REPORT_SCHEMA_VERSION}
    body.update(to_jsonable(payload))
    path.write_text(json.dumps(body, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def write_text_report(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def write_failure_marker(out_dir: Path, message: str) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / FAILURE_MARKER).write_text(message + "\n", encoding="utf-8")
    except OSError:
        pass  # never mask the original failure


def clear_failure_marker(out_dir: Path) -> None:
    marker = out_dir / FAILURE_MARKER
    if marker.exists():
        marker.unlink()


def write_run_info(out_dir: Path, argv: list[str], started: float, finished: float) -> None:
    """Timestamp sidecar; deliberately excluded from determinism guarantees."""
    info = {
        "argv": argv,
        "started_unix": started,
        "finished_unix": finished,
        "started_iso": datetime.datetime.fromtimestamp(
            started, tz=datetime.timezone.utc
        ).isoformat(),
        "elapsed_seconds": finished - started,
    }
    (out_dir / RUN_INFO).write_text(
        json.dumps(info, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
