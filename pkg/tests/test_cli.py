import csv
import json
import subprocess
import sys

import pytest

from handlemaslov.cli import ConfigError, main, parse_config


def write_cfg(tmp_path, **data):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(data))
    return str(path)


def run(tmp_path, command, name="out", **cfg):
    out = tmp_path / name
    args = [command, "--out", str(out)]
    if cfg:
        args += ["--config", write_cfg(tmp_path, **cfg)]
    return main(args), out


class TestConfig:
    def test_defaults(self):
        cfg = parse_config({})
        assert (cfg.scenario, cfg.n, cfg.resolved_epsilon()) == ("A", 3, 0.05)
        assert parse_config({"scenario": "B"}).resolved_epsilon() == 0.01

    @pytest.mark.parametrize("data", [
        {"bogus": 1},
        {"n": 1},
        {"n": 3.0},
        {"n": True},
        {"scenario": "C"},
        {"epsilon": 0.9},
        {"mu": -1},
        {"mu": "auto"},
        {"gauge_ks": []},
        {"scenario": "B", "gauge_ks": [1]},
        {"epsilons": [0.0]},
        [],
    ])
    def test_rejects(self, data):
        with pytest.raises(ConfigError):
            parse_config(data)


class TestCommands:
    def test_verify_a(self, tmp_path, capsys):
        code, out = run(tmp_path, "verify", handle_samples=1000)
        assert code == 0
        payload = json.loads((out / "checks.json").read_text())
        assert payload["report"]["entries"]
        assert payload["scenario"]["scenario"] == "A"

    def test_verify_b_n2_warns(self, tmp_path, capsys):
        code, _ = run(tmp_path, "verify", scenario="B", n=2)
        assert code == 0
        assert "warning:" in capsys.readouterr().out

    def test_maslov_gauge_table(self, tmp_path, capsys):
        code, out = run(tmp_path, "maslov", gauge_ks=[-1, 0, 1])
        assert code == 0
        payload = json.loads((out / "maslov.json").read_text())
        assert [row["difference"] for row in payload["gauge_table"]] == [1, 1, 1]
        traces = sorted(p.name for p in out.glob("trace_*.csv"))
        assert len(traces) == 12
        with open(out / traces[0]) as fh:
            assert next(csv.reader(fh)) == ["s", "phase", "modulus"]

    def test_maslov_b(self, tmp_path, capsys):
        code, out = run(tmp_path, "maslov", scenario="B", n=4)
        assert code == 0
        loops = json.loads((out / "maslov.json").read_text())["loops"]
        assert loops[0]["total_index"] == -2

    def test_gluing_failure_exit(self, tmp_path, capsys):
        code, out = run(tmp_path, "maslov", scenario="B", n=5, epsilon=0.05)
        assert code == 1
        assert "error" in json.loads((out / "maslov.json").read_text())

    def test_sweep(self, tmp_path, capsys):
        code, out = run(tmp_path, "sweep", n=3, epsilons=[0.2, 0.1, 0.05])
        assert code == 0
        with open(out / "sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        devs = [float(r["deviation"]) for r in rows]
        assert devs == sorted(devs, reverse=True)

    def test_empty_sweep(self, tmp_path, capsys):
        code, _ = run(tmp_path, "sweep", epsilons=[])
        assert code == 2

    def test_json_summary(self, tmp_path, capsys):
        out = tmp_path / "j"
        assert main(["maslov", "--out", str(out), "--json"]) == 0
        data = json.loads(capsys.readouterr().out)
        assert data == {"passed": True, "indices": {"sigma1*gamma1@k=0": 0, "sigma2*gamma2@k=0": 1}}

    def test_byte_identical_reruns(self, tmp_path, capsys):
        cfg = dict(handle_samples=500, gauge_ks=[0, 1])
        for cmd in ("verify", "maslov"):
            run(tmp_path, cmd, name="r1", **cfg)
            run(tmp_path, cmd, name="r2", **cfg)
        files = sorted(p.name for p in (tmp_path / "r1").iterdir())
        assert files
        for name in files:
            assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes(), name


class TestErrors:
    def test_malformed_json(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["verify", "--config", str(path), "--out", str(tmp_path)]) == 2
        assert "malformed JSON" in capsys.readouterr().err

    def test_missing_config(self, tmp_path, capsys):
        assert main(["verify", "--config", str(tmp_path / "nope.json")]) == 2

    def test_unknown_key(self, tmp_path, capsys):
        code, _ = run(tmp_path, "verify", colour="blue")
        assert code == 2

    def test_bad_subcommand(self, capsys):
        assert main(["launch"]) == 2

    def test_negative_seed(self, tmp_path, capsys):
        assert main(["verify", "--seed", "-1", "--out", str(tmp_path)]) == 2

    def test_help(self, capsys):
        assert main(["--help"]) == 0


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "handlemaslov", "sweep", "--out", str(tmp_path),
                           "--config", write_cfg(tmp_path, epsilons=[0.1])],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert "epsilon=0.1" in proc.stdout
