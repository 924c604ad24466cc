import json

import pytest

from sdnmitigate import cli
from sdnmitigate.runner import InvariantViolation

from _runs import SCENARIO_DIR

BENIGN = str(SCENARIO_DIR / "benign.ini")


def test_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["run", BENIGN, "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert '"name": "benign"' in printed
    assert len((out / "samples.csv").read_text().splitlines()) == 122
    assert json.loads((out / "summary.json").read_text())["seed"] == 1


def test_outputs_are_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["run", BENIGN, "--out", str(tmp_path / d), "--quiet"]) == 0
    for f in ("samples.csv", "events.log", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_overrides(tmp_path):
    out = tmp_path / "o"
    path = str(SCENARIO_DIR / "syn_flood.ini")
    assert cli.main(["run", path, "--out", str(out), "--protection", "off", "--seed", "77",
                     "--quiet"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["protection_enabled"] is False and summary["seed"] == 77
    assert summary["blocked"] == 0


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\nname = x\nseed = 1\nduration_s = 10\n[attack a]\nkind = udp_flood\n")
    assert cli.main(["run", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "attack a.kind" in capsys.readouterr().err


def test_missing_file_exit_code(tmp_path):
    assert cli.main(["run", str(tmp_path / "nope.ini")]) == 1


def test_unwritable_output_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["run", BENIGN, "--out", str(blocker / "sub"), "--quiet"]) == 1


def test_invariant_violation_exit_code(monkeypatch, capsys):
    def broken(cfg):
        raise InvariantViolation("connection table over capacity", {"occupancy": 999})

    monkeypatch.setattr(cli, "run_scenario", broken)
    assert cli.main(["run", BENIGN, "--quiet"]) == 3
    assert '"occupancy": 999' in capsys.readouterr().err


def test_usage_error():
    with pytest.raises(SystemExit):
        cli.main(["fly"])
