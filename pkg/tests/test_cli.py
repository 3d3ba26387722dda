import json
from pathlib import Path

import numpy as np
import pytest

from pqlift import cli, suites

BUNDLED = sorted((Path(suites.__file__).parent / "data" / "plugin_instances").glob("*.json"))


def _write(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def _summary(out):
    return json.loads((out / "summary.json").read_text())


def test_plugin_verify_on_given_files(tmp_path, capsys):
    out = tmp_path / "r"
    assert cli.main(["plugin-verify", *map(str, BUNDLED[:2]), "--out", str(out)]) == 0
    s = _summary(out)
    assert s["pass"] and s["config"]["bundled"] is False
    assert {"records.jsonl", "summary.json", "summary.txt"} <= {p.name for p in out.iterdir()}
    assert "PASS" in capsys.readouterr().out


def test_plugin_verify_bundled_with_config(tmp_path):
    cfg = _write(tmp_path / "c.json", {"subcommand": "plugin-verify", "sweep": False,
                                       "random_instances": 3, "seed": 5})
    out = tmp_path / "r"
    assert cli.main(["plugin-verify", "--config", str(cfg), "--out", str(out)]) == 0
    s = _summary(out)
    assert s["config"]["seed"] == 5 and s["config"]["random_instances"] == 3


def test_flags_override_config(tmp_path):
    cfg = _write(tmp_path / "c.json", {"sweep": False, "bundled": False, "random_instances": 9,
                                       "seed": 5})
    out = tmp_path / "r"
    assert cli.main(["plugin-verify", "--config", str(cfg), "--seed", "11", "--trials", "2",
                     "--out", str(out)]) == 0
    s = _summary(out)
    assert s["config"]["seed"] == 11 and s["config"]["random_instances"] == 2


@pytest.mark.parametrize("doc", [{"no_such_key": 1}, {"subcommand": "lift-run"}, [1, 2]])
def test_bad_config_exits_2(tmp_path, doc, capsys):
    cfg = _write(tmp_path / "c.json", doc)
    assert cli.main(["plugin-verify", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 2
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "r").exists()


def test_missing_files_exit_2(tmp_path):
    assert cli.main(["plugin-verify", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "r")]) == 2
    assert cli.main(["plugin-verify", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "r")]) == 2


def test_unsupported_assumption_exits_2(tmp_path):
    cfg = _write(tmp_path / "c.json", {"parts": ["unbiased"], "assumptions": ["no-such"],
                                       "trials": 5})
    assert cli.main(["persist-demo", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 2


@pytest.mark.parametrize("argv", [["bogus"], ["lift-run", "--seed", "-1"],
                                  ["lift-run", "--trials", "0"], ["lift-run", "--threads", "x"],
                                  []])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        cli.main(argv)
    assert exc.value.code == 2


def test_failing_check_exits_1(tmp_path, monkeypatch):
    def fake(cfg, threads=1):
        return [], {"checks": [{"name": "x", "value": 1, "threshold": 0, "pass": False}],
                    "config": cfg, "pass": False}
    monkeypatch.setattr(cli, "run_suite", fake)
    assert cli.main(["stateless-sim", "--out", str(tmp_path / "r")]) == 1
    assert "FAIL" in (tmp_path / "r" / "summary.txt").read_text()


def test_lift_run_reports_are_reproducible(tmp_path):
    cfg = _write(tmp_path / "c.json", {"stream_size": 20, "invocations": 2, "max_calls": 800})
    outs = []
    for i, threads in enumerate(("1", "3")):
        out = tmp_path / f"r{i}"
        cli.main(["lift-run", "--config", str(cfg), "--trials", "12", "--seed", "42",
                  "--threads", threads, "--out", str(out)])
        outs.append(out)
    for name in ("records.jsonl", "summary.json", "summary.txt"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    other = tmp_path / "r-other"
    cli.main(["lift-run", "--config", str(cfg), "--trials", "12", "--seed", "43",
              "--out", str(other)])
    assert (other / "records.jsonl").read_bytes() != (outs[0] / "records.jsonl").read_bytes()


def test_records_are_json_lines(tmp_path):
    out = tmp_path / "r"
    cli.main(["stateless-sim", "--trials", "20", "--out", str(out),
              "--config", str(_write(tmp_path / "c.json", {"shuffle_trials": 100}))])
    lines = (out / "records.jsonl").read_text().splitlines()
    assert lines and all(isinstance(json.loads(ln), dict) for ln in lines)


def test_persist_demo_use_once_value(tmp_path):
    # exact one-shot value of the use-once solver on toy-GL is 0.75
    cfg = _write(tmp_path / "c.json", {"parts": ["unbiased"], "assumptions": ["toy-GL"],
                                       "solvers": ["use-once"], "backends": ["exact"]})
    out = tmp_path / "r"
    assert cli.main(["persist-demo", "--config", str(cfg), "--trials", "2000",
                     "--out", str(out)]) == 0
    (c,) = _summary(out)["checks"]
    assert c["threshold"] == pytest.approx(0.75)
    assert abs(c["value"] - 0.75) <= 3 * c["stderr"] + 1e-12
    assert c["stderr"] > 0 and np.isfinite(c["value"])
