import csv
import io
import json
import subprocess
import sys

import pytest

from degenctrl.cli import (
    ConfigError,
    RunConfig,
    config_from_header,
    config_from_text,
    dumps_json,
    main,
    parse_config_text,
)


@pytest.fixture(autouse=True)
def _cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("DEGENCTRL_PRECISION", raising=False)
    return tmp_path


def data_rows(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.reader(io.StringIO("\n".join(lines))))


class TestConfig:
    def test_parse_flat_file(self):
        vals = parse_config_text("# comment\n\nalpha = 0.3\nmu=-1\nN=8\nside=left\n")
        assert vals == {"alpha": 0.3, "mu": -1.0, "N": 8, "side": "left"}

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            parse_config_text("alpah=0.3\n")

    def test_bad_values(self):
        with pytest.raises(ConfigError):
            parse_config_text("N=ten\n")
        with pytest.raises(ConfigError):
            parse_config_text("alpha 0.3\n")
        with pytest.raises(ConfigError):
            RunConfig("control", alpha=1.2).resolved()
        with pytest.raises(ConfigError):
            RunConfig("control", side="middle").resolved()
        with pytest.raises(ConfigError):
            RunConfig("control", datum="mode:99", N=4).resolved()

    def test_defaults(self, monkeypatch):
        c = RunConfig("spectrum").resolved()
        assert c.precision == "extended" and c.N == 24
        monkeypatch.setenv("DEGENCTRL_PRECISION", "base")
        c = RunConfig("spectrum").resolved()
        assert c.precision == "base" and c.N == 12
        assert c.output == "spectrum.csv"
        monkeypatch.setenv("DEGENCTRL_PRECISION", "quad")
        with pytest.raises(ConfigError):
            RunConfig("spectrum").resolved()

    def test_round_trip(self):
        c = RunConfig("simulate", alpha=0.3, mu=-1.0, T=0.5, N=6, snapshots="0.1,0.2").resolved()
        again = config_from_text("\n".join(c.to_lines()))
        assert again == c
        assert again.resolved() == c


class TestJson:
    def test_seventeen_digits(self):
        text = dumps_json({"b": 0.1, "a": [1, float("nan"), True, None, "x"]})
        assert '"b": 0.10000000000000001' in text
        assert text.index('"a"') < text.index('"b"')
        doc = json.loads(text)
        assert doc["a"] == [1, None, True, None, "x"]


class TestCommands:
    def test_control_example(self, _cwd):
        assert main(["control", "--alpha", "0", "--mu", "0", "--T", "1", "--side", "right", "--N", "10"]) == 0
        path = _cwd / "control.csv"
        rows = data_rows(path)
        assert rows[0] == ["t", "K", "H"]
        assert rows[1][0] == "0.0" and rows[1][2] == "0.0"
        assert len(rows) == 2049
        cfg = config_from_header(path.read_text())
        assert cfg.subcommand == "control" and cfg.N == 10 and cfg.side == "right"
        assert cfg == cfg.resolved()

    def test_verify_example(self, capsys):
        assert main(["verify", "--alpha", "0", "--mu", "0", "--T", "1", "--N", "10"]) == 0
        assert "verify: PASS" in capsys.readouterr().out

    def test_cost_sweep_left(self, _cwd):
        assert main(["cost-sweep", "--grid", "default", "--side", "left", "--N", "8"]) == 0
        text = (_cwd / "cost_sweep.csv").read_text()
        rows = data_rows(_cwd / "cost_sweep.csv")
        assert len(rows) - 1 == 27 - 9
        assert text.count("# note: skipped") == 9
        assert config_from_header(text).side == "left"

    def test_json_determinism(self, _cwd):
        argv = ["simulate", "--alpha", "0.3", "--mu", "-1", "--N", "6", "--precision", "extended", "--format", "json"]
        assert main(argv + ["-o", "a.json"]) == 0
        assert main(argv + ["-o", "b.json"]) == 0
        a = (_cwd / "a.json").read_bytes()
        b = (_cwd / "b.json").read_bytes()
        doc = json.loads(a)
        assert doc["config"]["alpha"] == 0.3
        # the output path is part of the embedded config; everything else is identical
        assert a.replace(b"a.json", b"b.json") == b

    def test_config_file_and_override(self, _cwd):
        (_cwd / "run.cfg").write_text("alpha=0.3\nmu=-1\nN=4\nprecision=base\n")
        assert main(["spectrum", "--config", "run.cfg", "--N", "5"]) == 0
        rows = data_rows(_cwd / "spectrum.csv")
        assert len(rows) == 6
        cfg = config_from_header((_cwd / "spectrum.csv").read_text())
        assert cfg.N == 5 and cfg.alpha == 0.3

    def test_other_subcommands(self, _cwd):
        assert main(["gaps", "--N", "20"]) == 0
        assert json.loads((_cwd / "gaps.json").read_text())["passes_bounds"] is True
        assert main(["biortho", "--N", "8", "--precision", "extended"]) == 0
        assert main(["simulate", "--N", "6", "--side", "left", "--alpha", "0.3", "--mu", "-1",
                     "--snapshots", "0.5", "--format", "csv", "-o", "sim.csv"]) == 0

    def test_exit_codes(self, _cwd, capsys):
        (_cwd / "bad.cfg").write_text("colour=blue\n")
        assert main(["spectrum", "--config", "bad.cfg"]) == 2
        assert main(["spectrum", "--alpha", "1.5"]) == 2
        assert main(["spectrum", "--N", "abc"]) == 2
        assert main(["nonsense"]) == 2
        assert main(["control", "--alpha", "0.3", "--mu", "0.1225", "--side", "left"]) == 2
        assert main(["biortho", "--N", "12", "--precision", "base"]) == 3
        assert main(["control", "--N", "12", "--precision", "base"]) == 3
        assert "numerical failure" in capsys.readouterr().err

    def test_console_script(self, _cwd):
        out = subprocess.run([sys.executable, "-m", "degenctrl.cli", "spectrum", "--N", "3"],
                             capture_output=True, text=True)
        assert out.returncode == 0
        assert (_cwd / "spectrum.csv").exists()
