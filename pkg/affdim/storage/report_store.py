"""Report persistence for affdim runs."""
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from affdim.observability import get_logger

logger = get_logger(__name__)


def jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become the strings inf, -inf, nan."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        f = float(value)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return value


def dumps(document: Dict[str, Any]) -> str:
    """Canonical report text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(jsonable(document), sort_keys=True, indent=2, allow_nan=False) + "\n"


class ReportStore:
    """Writes and reloads the JSON reports of one output directory."""

    def __init__(self, storage_path: str = "./out", provenance: Optional[Dict[str, Any]] = None):
        """
        Initialize the report store.

        Args:
            storage_path: Output directory (created if missing)
            provenance: Fields stamped into every report (schema version,
                toolkit version, config digest)
        """
        self.storage_path = Path(storage_path)
        self.storage_path.mkdir(parents=True, exist_ok=True)
        self.provenance = dict(provenance or {})

    def report_path(self, command: str) -> Path:
        return self.storage_path / f"{command}_report.json"

    def save_report(self, command: str, body: Dict[str, Any]) -> Path:
        """
        Write ``body`` as the report of ``command``.

        Returns:
            Path of the written file
        """
        document = {**body, **self.provenance, "command": command}
        path = self.report_path(command)
        path.write_text(dumps(document), encoding="utf-8")
        logger.info(f"Wrote {command} report to {path}")
        return path

    def load_report(self, command: str) -> Optional[Dict[str, Any]]:
        path = self.report_path(command)
        if not path.exists():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            logger.error(f"Error loading report {path}: {e}")
            return None

    def list_reports(self) -> List[str]:
        return sorted(p.name[: -len("_report.json")] for p in self.storage_path.glob("*_report.json"))
