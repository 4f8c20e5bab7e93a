import csv
import json
import math

import numpy as np
import pytest

from lyapcert.cli import main
from lyapcert.report import (SCHEMA, ConfigError, bundled_configs, dumps, load_config,
                             validate_config)


def test_dumps_format():
    text = dumps({"b": 0.1, "a": [1, 2.0, math.inf, -math.inf, math.nan], "c": np.float64(3)})
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert '"inf"' in text and '"-inf"' in text and '"nan"' in text
    assert "0.10000000000000001" in text and "3.0" in text
    d = json.loads(text)
    assert d["a"][:2] == [1, 2.0] and d["b"] == 0.1


def test_dumps_roundtrip_bits():
    x = np.random.default_rng(0).standard_normal(50) * 10.0 ** np.arange(-25, 25)
    back = json.loads(dumps({"x": x}))["x"]
    assert np.array_equal(np.array(back), x)


def test_schema_rejects_unknown_keys():
    cfg = load_config("gaussian1d")
    with pytest.raises(ConfigError):
        validate_config({**cfg, "bogus": 1})
    with pytest.raises(ConfigError):
        validate_config({**cfg, "grid": {**cfg["grid"], "nodez": 3}})


def test_bundled_configs_validate():
    names = bundled_configs()
    assert {"gaussian1d", "cauchy_beta2", "polar_r2_sin4", "x3_oscillatory"} <= set(names)
    for name in names:
        load_config(name)


def test_exit_codes(tmp_path):
    out = tmp_path / "g"
    assert main(["certify", "--config", "gaussian1d", "--out", str(out)]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**load_config("gaussian1d"), "bogus": True}))
    assert main(["certify", "--config", str(bad), "--out", str(tmp_path / "b")]) == 3
    rep = json.loads((out / "report.json").read_text())
    rep["certificates"]["poincare"]["certificate"]["C"] = 0.01
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(rep))
    assert main(["oracle", "--config", "gaussian1d", "--report", str(tampered),
                 "--out", str(tmp_path / "audit.json")]) == 2
    assert main(["oracle", "--config", "gaussian1d", "--report", str(out / "report.json"),
                 "--out", str(tmp_path / "audit_ok.json")]) == 0


def test_hard_error_names_stage(tmp_path, capsys):
    cfg = load_config("gaussian1d")
    cfg["phi_superlinear"]["phi"] = {"tag": "power", "c": 1.0, "exponent": 0.5}
    path = tmp_path / "sub.json"
    path.write_text(json.dumps(cfg))
    assert main(["certify", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["status"]["error"]["type"] == "WrongPhiRegime"
    assert rep["status"]["error"]["stage"]


def test_determinism_across_threads(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["certify", "--config", "gaussian1d", "--out", str(a), "--threads", "1"]) == 0
    assert main(["certify", "--config", "gaussian1d", "--out", str(b), "--threads", "4"]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()


def test_curves_csv(tmp_path):
    out = tmp_path / "c"
    assert main(["curves", "--config", "cauchy_beta2", "--out", str(out)]) == 0
    with open(out / "weak.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["s", "alpha"]
    s = np.array([float(r[0]) for r in rows[1:]])
    alpha = np.array([float(r[1]) for r in rows[1:]])
    order = np.argsort(s)
    assert np.all(np.diff(alpha[order]) <= 0)


def test_check_lemma_and_schema(tmp_path, capsys):
    assert main(["check-lemma", "--seed", "7", "--count", "10",
                 "--out", str(tmp_path / "lemma.json")]) == 0
    rep = json.loads((tmp_path / "lemma.json").read_text())
    assert rep["all_ok"] and len(rep["cases"]) == 10
    capsys.readouterr()
    assert main(["schema"]) == 0
    assert json.loads(capsys.readouterr().out) == json.loads(dumps(SCHEMA))
