"""Point clouds as CSV (x1..xd, word, trunc_bound) plus a sidecar meta JSON."""
import json
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from affdim.attractor import PointCloud
from affdim.errors import MalformedCloudError
from affdim.storage.report_store import dumps


def meta_path(csv_path: Path) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + ".meta.json")


def _format_address(row: np.ndarray) -> str:
    return "-".join(str(int(v) + 1) for v in row if v >= 0)


def write_cloud(cloud: PointCloud, path) -> Tuple[Path, Path]:
    """
    Write the cloud CSV and its meta sidecar.

    Floats are written with repr precision so reading back with
    ``float_precision="round_trip"`` restores every bit.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = cloud.dim
    frame = pd.DataFrame(cloud.points, columns=[f"x{k + 1}" for k in range(d)])
    frame["word"] = [_format_address(row) for row in cloud.addresses]
    frame["trunc_bound"] = cloud.truncation_bounds
    frame.to_csv(path, index=False, float_format=None, lineterminator="\n")
    sidecar = meta_path(path)
    sidecar.write_text(dumps(cloud.meta), encoding="utf-8")
    return path, sidecar


def read_cloud(path) -> PointCloud:
    """
    Read a cloud CSV (and its sidecar when present).

    Raises:
        MalformedCloudError: missing file, missing columns, empty cloud,
            unparsable words or non-finite coordinates
    """
    path = Path(path)
    if not path.exists():
        raise MalformedCloudError(f"cloud file {path} does not exist", {"path": str(path)})
    try:
        frame = pd.read_csv(path, float_precision="round_trip", dtype={"word": str},
                            keep_default_na=False)
    except (pd.errors.EmptyDataError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise MalformedCloudError(f"cannot parse cloud file {path}: {exc}", {"path": str(path)})
    coords = [c for c in frame.columns if c.startswith("x")]
    expected = [f"x{k + 1}" for k in range(len(coords))]
    if not coords or coords != expected or "word" not in frame or "trunc_bound" not in frame:
        raise MalformedCloudError(
            "cloud CSV needs columns x1..xd, word, trunc_bound",
            {"columns": list(frame.columns)},
        )
    if len(frame) == 0:
        raise MalformedCloudError("cloud file holds no points", {"path": str(path)})
    try:
        points = frame[coords].to_numpy(dtype=float)
        bounds = frame["trunc_bound"].to_numpy(dtype=float)
        words: List[List[int]] = [
            [int(tok) - 1 for tok in str(w).split("-")] if str(w) else [] for w in frame["word"]
        ]
    except ValueError as exc:
        raise MalformedCloudError(f"invalid cloud values: {exc}")
    if not np.all(np.isfinite(points)):
        raise MalformedCloudError("cloud has non-finite coordinates")
    if any(sym < 0 for w in words for sym in w):
        raise MalformedCloudError("word symbols are 1-based")
    width = max((len(w) for w in words), default=0)
    addresses = np.full((len(words), width), -1, dtype=np.int64)
    for i, w in enumerate(words):
        addresses[i, :len(w)] = w
    meta: Dict = {}
    sidecar = meta_path(path)
    if sidecar.exists():
        meta = json.loads(sidecar.read_text(encoding="utf-8"))
    return PointCloud(points=points, addresses=addresses, truncation_bounds=bounds, meta=meta)


def write_box_curve(curve: Sequence[Tuple[float, int]], path) -> Path:
    """Box-count curve as ``eps,count`` CSV."""
    path = Path(path)
    frame = pd.DataFrame(list(curve), columns=["eps", "count"])
    frame.to_csv(path, index=False, lineterminator="\n")
    return path
