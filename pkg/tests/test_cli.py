import hashlib
import json
import subprocess
import sys
from pathlib import Path

import yaml

from ehrelay.cli import main
from ehrelay.config import config_to_dict, paper_defaults


def _write_cfg(tmp_path: Path, **overrides) -> Path:
    data = config_to_dict(paper_defaults(**overrides))
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


def _mini_overrides():
    return dict(n_intervals=10, n_episodes=3)


class TestValidate:
    def test_echoes_derived_quantities(self, capsys):
        assert main(["validate", "--config", "paper.defaults"]) == 0
        out = capsys.readouterr().out
        assert "tau_data=0.99" in out
        assert "L_E=9" in out and "L_B=10" in out and "L_h=7" in out and "L_D=28" in out
        assert "total L=54" in out
        assert "0.00375000853" in out

    def test_invalid_field_named_with_exit_2(self, tmp_path, capsys):
        path = _write_cfg(tmp_path)
        data = yaml.safe_load(path.read_text())
        data["tau_sig"] = 2.0  # >= tau
        path.write_text(yaml.safe_dump(data))
        assert main(["validate", "--config", str(path)]) == 2
        assert "tau_sig" in capsys.readouterr().err

    def test_missing_file_exit_2(self, capsys):
        assert main(["validate", "--config", "/nonexistent/cfg.yaml"]) == 2


class TestRun:
    def test_sweep_csv_and_manifest(self, tmp_path, capsys):
        path = _write_cfg(tmp_path, **_mini_overrides())
        rc = main(["run", "--config", str(path), "--sweep", "tau_sig",
                   "--arms", "hasty", "--seed", "42",
                   "--out-dir", str(tmp_path / "out")])
        assert rc == 0
        csv_path = tmp_path / "out" / "tau_sig_seed42.csv"
        assert csv_path.exists()
        lines = csv_path.read_text().strip().split("\n")
        assert lines[0] == "sweep_value,arm,mean,ci_low,ci_high,metric"
        manifest = json.loads((tmp_path / "out" / "tau_sig_seed42_manifest.json").read_text())
        assert manifest["seed"] == 42
        assert "resolved_config" in manifest and "derived" in manifest
        index = (tmp_path / "out" / "manifests.jsonl").read_text().strip().split("\n")
        assert len(index) == 1

    def test_same_seed_identical_outputs(self, tmp_path):
        path = _write_cfg(tmp_path, **_mini_overrides())
        digests = []
        for sub in ("a", "b"):
            rc = main(["run", "--config", str(path), "--sweep", "tau_sig",
                       "--arms", "marl,hasty", "--seed", "42",
                       "--out-dir", str(tmp_path / sub)])
            assert rc == 0
            digests.append(hashlib.sha256(
                (tmp_path / sub / "tau_sig_seed42.csv").read_bytes()).hexdigest())
        assert digests[0] == digests[1]

    def test_rerun_from_manifest_snapshot_reproduces(self, tmp_path):
        path = _write_cfg(tmp_path, **_mini_overrides())
        rc = main(["run", "--config", str(path), "--sweep", "buffer",
                   "--arms", "hasty", "--seed", "9", "--out-dir", str(tmp_path / "a")])
        assert rc == 0
        manifest = json.loads((tmp_path / "a" / "buffer_seed9_manifest.json").read_text())
        snap = tmp_path / "snap.yaml"
        snap.write_text(yaml.safe_dump(manifest["resolved_config"]))
        rc = main(["run", "--config", str(snap), "--sweep", "buffer",
                   "--arms", "hasty", "--out-dir", str(tmp_path / "b")])
        assert rc == 0
        a = (tmp_path / "a" / "buffer_seed9.csv").read_bytes()
        b = (tmp_path / "b" / "buffer_seed9.csv").read_bytes()
        assert a == b

    def test_manifest_index_appends(self, tmp_path):
        path = _write_cfg(tmp_path, **_mini_overrides())
        out = tmp_path / "out"
        for seed in ("1", "2"):
            main(["run", "--config", str(path), "--sweep", "tau_sig",
                  "--arms", "hasty", "--seed", seed, "--out-dir", str(out)])
        index = (out / "manifests.jsonl").read_text().strip().split("\n")
        assert len(index) == 2


class TestOracleCommand:
    def test_single_interval_realization(self, tmp_path, capsys):
        real = tmp_path / "real.csv"
        real.write_text("i,E1,E2,h1,h2\n1,3.0,3.0,1.0,1.0\n")
        cfg = _write_cfg(tmp_path, n_intervals=1)
        data = yaml.safe_load(cfg.read_text())
        data["delta"] = [data["b_max"][0] / 5, data["b_max"][1] / 5]
        cfg.write_text(yaml.safe_dump(data))
        rc = main(["oracle", "--config", str(cfg), "--realization", str(real),
                   "--out-dir", str(tmp_path / "out")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "value_bound 0" in out
        sched = (tmp_path / "out" / "oracle_seed0.csv").read_text().strip().split("\n")
        assert sched[0] == "i,p1,p2"
        assert sched[1].startswith("1,")

    def test_oversized_instance_exit_3(self, tmp_path, capsys):
        cfg = _write_cfg(tmp_path, n_intervals=50)
        rc = main(["oracle", "--config", str(cfg), "--out-dir", str(tmp_path / "out")])
        assert rc == 3
        assert "coarser" in capsys.readouterr().err


class TestTraceCommand:
    def test_trace_csv_format(self, tmp_path):
        cfg = _write_cfg(tmp_path, n_intervals=6)
        rc = main(["trace", "--config", str(cfg), "--arm", "marl",
                   "--episodes", "2", "--out-dir", str(tmp_path / "out")])
        assert rc == 0
        lines = (tmp_path / "out" / "trace_marl_seed0.csv").read_text().strip().split("\n")
        assert lines[0].startswith("episode,i,E1,E2,B1,B2,h1,h2,D1,D2,")
        assert len(lines) == 1 + 2 * 6
        first = lines[1].split(",")
        assert first[0] == "0" and first[1] == "1"
        # 9 significant digits on floats
        for cell in first[2:6]:
            assert len(cell.replace(".", "").replace("-", "").lstrip("0")) <= 9

    def test_env_var_out_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("EHRELAY_OUT_DIR", str(tmp_path / "envout"))
        cfg = _write_cfg(tmp_path, n_intervals=4)
        rc = main(["trace", "--config", str(cfg), "--arm", "hasty"])
        assert rc == 0
        assert (tmp_path / "envout" / "trace_hasty_seed0.csv").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "ehrelay", "validate", "--config", "paper.defaults"],
        capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0
    assert "total L=54" in proc.stdout
