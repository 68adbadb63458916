"""CLI tests: config parsing, exit codes, output layout, determinism."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from granubath.cli import main
from granubath.errors import ConfigError
from granubath.runio import (build_spec, parse_config_file, parse_cross_section,
                             parse_init, typed_config)


def run_cli(*args):
    return main(list(args))


class TestConfigFile:
    def test_minimal_config(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("alpha = 0.95\nnp = 20000\nseed = 7\n")
        options = typed_config(parse_config_file(path))
        spec = build_spec("steady", options)
        assert spec.config.alpha == 0.95
        assert spec.config.n_particles == 20_000
        assert spec.config.seed == 7
        # defaults filled
        assert spec.config.rho == 1.0
        assert spec.config.momentum_projection is True

    def test_comments_and_blanks(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# header\n\nalpha = 0.9  # inline\n")
        assert parse_config_file(path) == {"alpha": "0.9"}

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("alhpa = 0.9\n")
        with pytest.raises(ConfigError, match="alhpa"):
            parse_config_file(path)

    def test_type_error_names_key(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("np = lots\n")
        with pytest.raises(ConfigError, match="np"):
            typed_config(parse_config_file(path))

    def test_same_file_parsed_twice_identical(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("alpha = 0.93\nnp = 512\ntau = 0.25\n")
        s1 = build_spec("steady", typed_config(parse_config_file(path)))
        s2 = build_spec("steady", typed_config(parse_config_file(path)))
        assert s1.config == s2.config

    def test_domain_violation_rejected(self):
        with pytest.raises(ConfigError, match="alpha"):
            build_spec("steady", {"alpha": 1.2})

    def test_init_and_cross_section_specs(self):
        init = parse_init("bimodal:0.1:1.0:0.3")
        assert init.theta_a == 0.1 and init.fraction == 0.3
        cs = parse_cross_section("constant:2.0")
        assert cs.b0_prime == 2.0
        with pytest.raises(ConfigError):
            parse_init("gaussian:1")
        with pytest.raises(ConfigError):
            parse_cross_section("mystery:1")


class TestExitCodes:
    def test_config_error_exits_2(self, tmp_path, capsys):
        code = run_cli("steady", "--alpha", "1.2", "--out", str(tmp_path / "o"))
        assert code == 2
        assert "alpha" in capsys.readouterr().err

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("mystery = 1\n")
        code = run_cli("steady", "--config", str(cfg),
                       "--out", str(tmp_path / "o"))
        assert code == 2

    def test_validate_exits_0(self, tmp_path):
        assert run_cli("validate", "--out", str(tmp_path / "v")) == 0

    def test_moments_exits_0(self, tmp_path, capsys):
        assert run_cli("moments", "--dimension", "3",
                       "--out", str(tmp_path / "m")) == 0
        out = capsys.readouterr().out
        assert "speed_power_2" in out


class TestOutputs:
    def test_moments_writes_manifest_with_digests(self, tmp_path):
        out = tmp_path / "m"
        run_cli("moments", "--out", str(out))
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["tool"] == "granubath"
        assert "moments.csv" in manifest["outputs"]
        assert len(manifest["outputs"]["moments.csv"]) == 64  # sha256 hex
        assert manifest["started"] <= manifest["finished"]

    def test_no_partial_files(self, tmp_path):
        out = tmp_path / "m"
        run_cli("moments", "--out", str(out))
        assert not list(out.glob("*.tmp"))

    def test_steady_output_layout(self, tmp_path):
        out = tmp_path / "s"
        code = run_cli("steady", "--alpha", "0.9", "--np", "1500",
                       "--replicas", "2", "--t-end", "2.0", "--burn-in", "0.5",
                       "--seed", "3", "--out", str(out))
        assert code == 0
        names = {p.name for p in out.iterdir()}
        assert {"result.json", "results.csv", "config.json", "manifest.json",
                "predictions.json", "series_r00.csv", "series_r01.csv"} <= names
        result = json.loads((out / "result.json").read_text())
        assert result["alpha"] == 0.9
        header = (out / "series_r00.csv").read_text().splitlines()[0]
        assert header.startswith("time,rho,theta,m2,m3,DE_hat,residual")
        preds = json.loads((out / "predictions.json").read_text())
        assert preds["rows"][0]["alpha"] == 0.9
        assert preds["cross_section"] == "constant:1"

    def test_series_sidecar_config(self, tmp_path):
        out = tmp_path / "s"
        run_cli("steady", "--alpha", "0.9", "--np", "1500", "--replicas", "1",
                "--t-end", "1.0", "--burn-in", "0.3", "--seed", "3",
                "--out", str(out))
        sidecar = json.loads((out / "config.json").read_text())
        assert sidecar["seed"] == 3
        assert sidecar["kind"] == "steady"


class TestDeterminism:
    def test_steady_rerun_byte_identical(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = run_cli("steady", "--alpha", "0.9", "--np", "1500",
                           "--replicas", "2", "--t-end", "1.5",
                           "--burn-in", "0.5", "--seed", "7", "--out", str(out))
            assert code == 0
            outs.append(out)
        for path_a in sorted(outs[0].iterdir()):
            if path_a.name == "manifest.json":  # carries wall-clock times
                continue
            path_b = outs[1] / path_a.name
            assert path_a.read_bytes() == path_b.read_bytes(), path_a.name

    def test_manifest_digests_match_across_reruns(self, tmp_path):
        manifests = []
        for name in ("a2", "b2"):
            out = tmp_path / name
            run_cli("moments", "--out", str(out))
            manifests.append(json.loads((out / "manifest.json").read_text()))
        assert manifests[0]["outputs"] == manifests[1]["outputs"]


class TestSubprocessEntry:
    def test_module_invocation(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "granubath", "moments",
             "--out", str(tmp_path / "m")],
            capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0
        assert "relative_speed_cubed" in proc.stdout
