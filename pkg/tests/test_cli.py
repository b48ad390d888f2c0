import json
from pathlib import Path

import pytest

from corona_lab.cli import fmt, main
from corona_lab.config import parse_config
from corona_lab.errors import ConfigError
from corona_lab.spaces import SCHEMA_VERSION

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def test_classify_constant_passes(tmp_path):
    assert main(["classify-function", "--config", str(CONFIGS / "classify_constant.json"),
                 "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["passed"] is True
    assert summary["schema_version"] == SCHEMA_VERSION
    assert len(summary["config_hash"]) > 8
    rows = (tmp_path / "scales.csv").read_text().splitlines()
    assert rows[0].startswith("R,C,")
    assert all(r.split(",")[1] == "0" for r in rows[1:])


def test_constant_map_fails_with_witness(tmp_path, capsys):
    assert main(["check-map", "--config", str(CONFIGS / "map_constant.json"),
                 "--out", str(tmp_path)]) == 1
    assert "witness" in capsys.readouterr().err
    assert json.loads((tmp_path / "summary.json").read_text())["passed"] is False


def test_bad_configs_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["classify-function", "--config", str(bad)]) == 2
    bad.write_text(json.dumps({"experiment": "check-map", "params": {}}))
    assert main(["classify-function", "--config", str(bad)]) == 2
    bad.write_text(json.dumps({"experiment": "classify-function", "params": {}}))
    assert main(["classify-function", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["classify-function", "--config", str(tmp_path / "missing.json")]) == 2


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["nope", "--config", "x.json"])
    assert exc.value.code == 2


def test_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("CORONA_LAB_THREADS", "lots")
    assert main(["classify-function", "--config", str(CONFIGS / "classify_constant.json"),
                 "--out", str(tmp_path)]) == 2
    monkeypatch.setenv("CORONA_LAB_THREADS", "2")
    assert main(["classify-function", "--config", str(CONFIGS / "classify_constant.json"),
                 "--out", str(tmp_path)]) == 0


def test_config_hash_is_stable():
    a = parse_config({"experiment": "homotopy", "params": {"b": 1, "a": [1, 2]}})
    b = parse_config({"params": {"a": [1, 2], "b": 1}, "experiment": "homotopy"})
    assert a.hash == b.hash
    with pytest.raises(ConfigError):
        parse_config({"experiment": "homotopy", "extra": 1})
    with pytest.raises(ConfigError):
        parse_config({"experiment": "homotopy", "schema_version": 99})


def test_fmt_roundtrips_floats():
    x = 0.1 + 0.2
    assert float(fmt(x)) == x and fmt(True) == "true" and fmt(None) == ""
