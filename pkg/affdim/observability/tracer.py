"""Tracing for affdim pipeline steps."""
import time
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List, Optional

import affdim.config as config


class Tracer:
    """Wall-clock tracer for orchestrator steps.

    Durations are kept in memory only; they never reach JSON reports, which
    must be byte-identical between runs.
    """

    def __init__(self, enabled: Optional[bool] = None):
        self.traces: List[Dict[str, Any]] = []
        self.enabled = config.ENABLE_TRACING if enabled is None else enabled

    @contextmanager
    def trace(self, operation_name: str, metadata: Optional[Dict[str, Any]] = None) -> Iterator[Dict[str, Any]]:
        """
        Context manager for tracing a step.

        Args:
            operation_name: Name of the step
            metadata: Optional metadata to include

        Yields:
            The mutable trace record, so callers can attach counters
        """
        record: Dict[str, Any] = {"operation": operation_name, "metadata": dict(metadata or {})}
        if not self.enabled:
            yield record
            return

        start = time.perf_counter()
        record["status"] = "success"
        try:
            yield record
        except BaseException as exc:
            record["status"] = "error"
            record["error_type"] = type(exc).__name__
            raise
        finally:
            record["duration_seconds"] = round(time.perf_counter() - start, 6)
            self.traces.append(record)

    def get_operation_stats(self) -> Dict[str, Dict[str, Any]]:
        """Get count and duration statistics for each step."""
        stats: Dict[str, Dict[str, Any]] = {}
        for trace in self.traces:
            op = stats.setdefault(trace["operation"], {
                "count": 0,
                "errors": 0,
                "total_duration": 0.0,
                "min_duration": float("inf"),
                "max_duration": 0.0,
            })
            duration = trace.get("duration_seconds", 0.0)
            op["count"] += 1
            op["errors"] += trace.get("status") == "error"
            op["total_duration"] += duration
            op["min_duration"] = min(op["min_duration"], duration)
            op["max_duration"] = max(op["max_duration"], duration)

        for op in stats.values():
            op["avg_duration"] = op["total_duration"] / op["count"]
        return stats
