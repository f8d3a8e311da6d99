import json
import math

import jsonschema
import numpy as np
import pytest

from ltvdetect.report import build_report, dumps, load_schema, strip_metadata, write_csv

SYSTEM = {"name": "s", "n": 1, "p": 1, "source": "s.toml"}
CONFIG = {"horizon": 50.0, "integrator": {"method": "rk4", "step": None, "rtol": 1e-10, "atol": 1e-12}}


def test_numpy_values_and_non_finite_are_cleaned():
    r = build_report("qr", {"a": np.float64(1.5), "b": np.array([1, 2]), "c": math.inf, "d": np.bool_(True)},
                     system=SYSTEM, config=CONFIG, seed=0)
    assert r["result"] == {"a": 1.5, "b": [1, 2], "c": None, "d": True}
    json.loads(dumps(r))


def test_schema_rejects_unknown_top_level_key():
    r = build_report("qr", {}, system=SYSTEM, config=CONFIG, seed=0)
    jsonschema.validate(r, load_schema())
    r["extra"] = 1
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(r, load_schema())


def test_analyze_result_requires_verdict():
    r = build_report("analyze", {"stage": None}, system=SYSTEM, config=CONFIG, seed=0)
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(r, load_schema())


def test_strip_metadata():
    r = build_report("qr", {}, system=SYSTEM, config=CONFIG, seed=0)
    assert "metadata" in r and "metadata" not in strip_metadata(r)


def test_csv_roundtrip_keeps_full_precision(tmp_path):
    p = write_csv(tmp_path / "x.csv", ["t", "v"], [[0.1, 1 / 3]])
    assert float(p.read_text().splitlines()[1].split(",")[1]) == 1 / 3
