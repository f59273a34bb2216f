import math

import numpy as np

from affdim.storage import ReportStore
from affdim.storage.report_store import dumps


def test_report_round_trip(tmp_path):
    store = ReportStore(str(tmp_path / "out"), provenance={"schema_version": 1, "config_digest": "ab"})
    body = {"success": True, "value": 1.584962500721156, "bracket": (1.5, 1.6),
            "counts": np.array([3, 9, 27]), "gap": math.inf}
    path = store.save_report("dim", body)
    assert path.name == "dim_report.json"
    loaded = store.load_report("dim")
    assert loaded["value"] == 1.584962500721156
    assert loaded["bracket"] == [1.5, 1.6]
    assert loaded["counts"] == [3, 9, 27]
    assert loaded["gap"] == "inf"
    assert loaded["command"] == "dim"
    assert loaded["schema_version"] == 1
    assert loaded["config_digest"] == "ab"


def test_list_reports(tmp_path):
    store = ReportStore(str(tmp_path))
    assert store.list_reports() == []
    for command in ("verify", "dim", "generate"):
        store.save_report(command, {"success": True})
    (tmp_path / "cloud.meta.json").write_text("{}")
    assert store.list_reports() == ["dim", "generate", "verify"]


def test_missing_or_corrupt_report(tmp_path):
    store = ReportStore(str(tmp_path))
    assert store.load_report("dim") is None
    store.report_path("dim").write_text("{not json")
    assert store.load_report("dim") is None


def test_dumps_is_canonical():
    text = dumps({"b": float("nan"), "a": [np.float64(0.5), np.bool_(True)]})
    assert text == '{\n  "a": [\n    0.5,\n    true\n  ],\n  "b": "nan"\n}\n'
