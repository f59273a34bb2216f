import json
import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from affdim.cli import main
from affdim.storage import read_cloud
from tests.conftest import LOG3_LOG2, SIERPINSKI_MAPS


def run(capsys, *argv):
    code = main(list(argv))
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    return code, summary


def report(out_dir, command):
    return json.loads((Path(out_dir) / f"{command}_report.json").read_text())


def base_config(**overrides):
    doc = {
        "ifs": {"maps": SIERPINSKI_MAPS},
        "distribution": {"kind": "gaussian", "sigma": 0.05},
        "seeds": [7],
        "generation": {"count": 500, "truncation_tol": 1e-9},
    }
    doc.update(overrides)
    return doc


def test_dim_report(capsys, write_config, tmp_path):
    out = tmp_path / "out"
    code, summary = run(capsys, "dim", "--config", write_config(base_config()), "--out", str(out))
    assert code == 0
    assert summary["success"]
    body = report(out, "dim")
    assert abs(body["value"] - LOG3_LOG2) <= 1e-3
    assert body["schema_version"] == 1
    assert len(body["config_digest"]) == 64
    assert body["certified_upper"]


def test_dim_rejects_expanding_map(capsys, write_config, tmp_path):
    maps = [{"matrix": [[1.2, 0.0], [0.0, 0.5]], "translation": [0.0, 0.0]}]
    out = tmp_path / "out"
    code, summary = run(capsys, "dim", "--config", write_config(base_config(ifs={"maps": maps})),
                        "--out", str(out))
    assert code == 1
    assert summary["error"]["kind"] == "not-contracting"
    assert report(out, "dim")["error"]["details"]["map"] == 1


def test_unknown_config_field(capsys, write_config, tmp_path):
    doc = base_config()
    doc["generation"]["colour"] = "red"
    code, summary = run(capsys, "dim", "--config", write_config(doc), "--out", str(tmp_path))
    assert code == 1
    assert summary["error"]["kind"] == "config"
    assert "generation.colour" in summary["error"]["message"]


def test_reports_are_byte_identical(capsys, write_config, tmp_path):
    path = write_config(base_config())
    texts = []
    for threads, name in ((1, "a"), (4, "b"), (1, "c")):
        out = tmp_path / name
        assert run(capsys, "dim", "--config", path, "--out", str(out), "--threads", str(threads))[0] == 0
        assert run(capsys, "generate", "--config", path, "--out", str(out), "--threads", str(threads))[0] == 0
        texts.append([(out / f).read_bytes() for f in
                      ("dim_report.json", "generate_report.json", "cloud.csv", "cloud.svg")])
    assert texts[0] == texts[1] == texts[2]


def test_generate_writes_cloud(capsys, write_config, tmp_path):
    out = tmp_path / "out"
    code, _ = run(capsys, "generate", "--config", write_config(base_config()), "--out", str(out))
    assert code == 0
    frame = pd.read_csv(out / "cloud.csv", dtype={"word": str})
    assert list(frame.columns) == ["x1", "x2", "word", "trunc_bound"]
    assert len(frame) == 500
    assert (frame["trunc_bound"] <= 1e-9).all()
    assert (out / "cloud.meta.json").exists()
    assert (out / "cloud.svg").read_text().lstrip().startswith("<?xml")
    cloud = read_cloud(out / "cloud.csv")
    assert cloud.meta["generation"]["count"] == 500
    body = report(out, "generate")
    assert body["count"] == 500
    assert body["svg"]["projection"] == "x1,x2"


def test_generate_seed_override(capsys, write_config, tmp_path):
    path = write_config(base_config())
    run(capsys, "generate", "--config", path, "--out", str(tmp_path / "a"))
    run(capsys, "generate", "--config", path, "--out", str(tmp_path / "b"), "--seed", "8")
    a = read_cloud(tmp_path / "a" / "cloud.csv").points
    b = read_cloud(tmp_path / "b" / "cloud.csv").points
    assert not np.array_equal(a, b)


def test_generate_three_dimensional_plot(capsys, write_config, tmp_path):
    maps = [{"matrix": np.diag([0.5, 0.4, 0.3]).tolist(), "translation": [float(i), 0.0, 0.0]}
            for i in range(2)]
    out = tmp_path / "out"
    code, _ = run(capsys, "generate", "--config", write_config(base_config(ifs={"maps": maps})),
                  "--out", str(out))
    assert code == 0
    assert report(out, "generate")["svg"]["projection"] == "x1,x2"
    assert read_cloud(out / "cloud.csv").dim == 3


def test_estimate_needs_cloud(capsys, write_config, tmp_path):
    code, summary = run(capsys, "estimate", "--config", write_config(base_config()), "--out", str(tmp_path))
    assert code == 1
    assert summary["error"]["kind"] == "config"


def test_estimate_empty_cloud(capsys, write_config, tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("x1,x2,word,trunc_bound\n")
    code, summary = run(capsys, "estimate", "--config", write_config(base_config()),
                        "--out", str(tmp_path / "out"), "--cloud", str(empty))
    assert code == 1
    assert summary["error"]["kind"] == "malformed-cloud"


def test_estimate_rejects_integral_exponent(capsys, write_config, tmp_path):
    doc = base_config(estimation={"t_list": [1.0]})
    cloud = tmp_path / "c.csv"
    cloud.write_text("x1,x2,word,trunc_bound\n0.0,0.0,1-2,0.0\n")
    code, summary = run(capsys, "estimate", "--config", write_config(doc),
                        "--out", str(tmp_path / "out"), "--cloud", str(cloud))
    assert code == 1
    assert summary["error"]["kind"] == "integral-exponent"


def test_estimate_on_generated_cloud(capsys, write_config, tmp_path):
    doc = base_config(generation={"count": 20000, "truncation_tol": 1e-9},
                      distribution={"kind": "uniform-ball", "radius": 0.0})
    path = write_config(doc)
    out = tmp_path / "out"
    assert run(capsys, "generate", "--config", path, "--out", str(out))[0] == 0
    code, _ = run(capsys, "estimate", "--config", path, "--out", str(out), "--cloud", str(out / "cloud.csv"))
    assert code == 0
    body = report(out, "estimate")
    assert body["points"] == 20000
    assert body["gap"] < 0.2
    assert (out / "box_curve.csv").exists()


def test_estimate_reuses_dim_report(capsys, write_config, tmp_path):
    path = write_config(base_config(generation={"count": 2000, "truncation_tol": 1e-9}))
    out = tmp_path / "out"
    assert run(capsys, "generate", "--config", path, "--out", str(out))[0] == 0
    cloud = str(out / "cloud.csv")
    assert run(capsys, "estimate", "--config", path, "--out", str(out), "--cloud", cloud)[0] == 0
    computed = report(out, "estimate")
    assert computed["dimension_source"] == "computed"
    assert run(capsys, "dim", "--config", path, "--out", str(out))[0] == 0
    assert report(out, "dim")["seed"] == 7
    assert run(capsys, "estimate", "--config", path, "--out", str(out), "--cloud", cloud)[0] == 0
    reused = report(out, "estimate")
    assert reused["dimension_source"] == "dim_report"
    assert reused["affinity_dimension"] == report(out, "dim")["value"]
    assert reused["affinity_dimension"] == computed["affinity_dimension"]


def test_estimate_ignores_dim_report_of_other_run(capsys, write_config, tmp_path):
    path = write_config(base_config(generation={"count": 2000, "truncation_tol": 1e-9}))
    out = tmp_path / "out"
    assert run(capsys, "generate", "--config", path, "--out", str(out))[0] == 0
    assert run(capsys, "dim", "--config", path, "--out", str(out), "--seed", "99")[0] == 0
    other = write_config(base_config(seeds=[7], generation={"count": 2000, "truncation_tol": 1e-8}), "other.json")
    cloud = str(out / "cloud.csv")
    assert run(capsys, "estimate", "--config", path, "--out", str(out), "--cloud", cloud)[0] == 0
    assert report(out, "estimate")["dimension_source"] == "computed"
    assert run(capsys, "estimate", "--config", other, "--out", str(out), "--cloud", cloud)[0] == 0
    assert report(out, "estimate")["dimension_source"] == "computed"


def test_verify_negative_control(capsys, write_config, tmp_path):
    doc = base_config(distribution={"kind": "student-t", "nu": 3.0, "scale": 0.05},
                      verify={"theta": 0.8, "n_max_level": 12, "samples_per_level": 300})
    out = tmp_path / "out"
    code, _ = run(capsys, "verify", "--config", write_config(doc), "--out", str(out))
    assert code == 0
    body = report(out, "verify")
    assert body["negative_control"]
    assert body["checks"]["borel_cantelli"]["admissible"] is False
    assert body["checks"]["borel_cantelli"]["passed"]
    assert body["warnings"]


def test_verify_gaussian(capsys, write_config, tmp_path):
    doc = base_config(
        estimation={"energy_pairs": 300, "transversality_seeds": 200},
        verify={"n_max_level": 20, "samples_per_level": 500, "covering_levels": 5},
    )
    out = tmp_path / "out"
    code, _ = run(capsys, "verify", "--config", write_config(doc), "--out", str(out))
    assert code == 0
    body = report(out, "verify")
    assert body["negative_control"] is False
    assert body["checks"]["borel_cantelli"]["series_converges"]
    assert body["checks"]["transversality"]["passed"]
    assert body["checks"]["covering"]["passed"]
    assert math.isfinite(body["affinity_dimension"])
    assert body["all_passed"]
