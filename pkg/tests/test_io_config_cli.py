import math

import numpy as np
import pytest

from loglog_forge import config as cfgmod
from loglog_forge.cli import execute
from loglog_forge.errors import ConfigError
from loglog_forge.io import (read_columns, read_csv, read_snapshot_binary, write_csv,
                             write_snapshot_binary, write_snapshot_csv)

SMALL_RUN = """
[metric]
kind = round-sphere

[grid]
r_lo = 0.5
r_hi = 1.5
n = 2000

[evolution]
lambda0 = 0.05
b0 = 0.25
max_steps = 30
record_every = 10
snapshot_every = 15

[output]
snapshot_format = binary
"""


class TestIO:
    """CSV and snapshot round trips."""

    def test_csv_round_trip(self, tmp_path):
        p = write_csv(tmp_path / "a.csv", ["x", "y", "tag"], [[0.1, 1 / 3, "ok"], [2, math.pi, "no"]])
        header, rows = read_csv(p)
        assert header == ["x", "y", "tag"]
        assert rows[0][1] == 1 / 3 and rows[1][1] == math.pi
        assert b"\r" not in p.read_bytes()

    def test_columns(self, tmp_path):
        p = write_csv(tmp_path / "c.csv", ["a", "b"], [[1.0, "x"], [2.0, "y"]])
        cols = read_columns(p)
        assert np.array_equal(cols["a"], [1.0, 2.0]) and cols["b"] == ["x", "y"]

    def test_binary_snapshot(self, tmp_path):
        r = np.linspace(0, 1, 7)
        v = np.exp(1j * r) / 3
        p = write_snapshot_binary(tmp_path / "s.rnls", r, v)
        raw = p.read_bytes()
        assert raw[:4] == b"RNLS" and len(raw) == 4 + 4 + 8 + 3 * 8 * 7
        r2, v2 = read_snapshot_binary(p)[:2]
        assert np.array_equal(r2, r) and np.array_equal(v2, v)

    def test_csv_snapshot(self, tmp_path):
        p = write_snapshot_csv(tmp_path / "s.csv", 0.5, np.array([0.1, 0.2]), np.array([1j, 2.0]))
        header, rows = read_csv(p)
        assert header == ["t", "r", "Re u", "Im u"]
        assert rows[0] == [0.5, 0.1, 0.0, 1.0]


class TestConfig:
    def test_defaults_round_trip(self):
        cfg = cfgmod.RunConfig()
        text = cfgmod.serialize(cfg)
        assert cfgmod.parse(text) == cfg
        assert cfgmod.serialize(cfgmod.parse(text)) == text

    def test_float_bits_preserved(self):
        cfg = cfgmod.parse("[evolution]\nlambda0 = 0.1\nc_dt = 0.30000000000000004\n")
        back = cfgmod.parse(cfgmod.serialize(cfg))
        assert back["evolution"]["c_dt"] == 0.30000000000000004

    def test_lists_and_bools(self):
        cfg = cfgmod.parse("[radiation]\nb = 0.2, 0.25 0.3\n[evolution]\ntracking = off\n")
        assert cfg["radiation"]["b"] == [0.2, 0.25, 0.3]
        assert cfg["evolution"]["tracking"] is False

    @pytest.mark.parametrize("text", [
        "[grid]\nbogus = 1\n",
        "[nowhere]\nx = 1\n",
        "[grid]\nn = many\n",
        "[metric]\nkind = torus\n",
        "[evolution]\nlambda0 = -1\n",
        "[grid]\nr_lo = nan\n",
        "no section header\n",
    ])
    def test_rejected(self, text):
        with pytest.raises(ConfigError):
            cfgmod.parse(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            cfgmod.load(tmp_path / "absent.cfg")


class TestCLI:
    """Exit codes and artifacts."""

    def test_profile(self, tmp_path):
        assert execute(["profile", "--b", "0.2", "--eta", "0.01", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "profile_b0.2.csv").exists()
        cols = read_columns(tmp_path / "profiles.csv")
        assert cols["mass_excess"][0] > 0

    def test_usage_error(self, capsys):
        assert execute(["profile", "--bogus"]) == 2
        assert "usage" in capsys.readouterr().err

    def test_unknown_subcommand(self):
        assert execute(["launch"]) == 2

    def test_computation_error(self, tmp_path, capsys):
        assert execute(["profile", "--b", "0.7", "--out", str(tmp_path)]) == 1
        assert "BTooLarge: b-too-large" in capsys.readouterr().err

    def test_bad_threads_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("LOGLOG_FORGE_THREADS", "zero")
        assert execute(["profile", "--b", "0.2", "--out", str(tmp_path)]) == 2

    def test_config_error_exit(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("[grid]\nbogus = 1\n")
        assert execute(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2

    def test_simulate_and_fit(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(SMALL_RUN)
        outs = []
        for k in range(2):
            d = tmp_path / f"o{k}"
            assert execute(["simulate", "--config", str(cfg), "--out", str(d)]) == 0
            outs.append(d)
        a, b = ((d / "trajectory.csv").read_bytes() for d in outs)
        assert a == b
        assert (outs[0] / "snapshot_0000.rnls").exists()
        assert (outs[0] / "snapshot_0002.rnls").exists()
        cols = read_columns(outs[0] / "trajectory.csv")
        assert list(cols)[:9] == ["t", "lambda", "b", "r_center", "gamma", "mass", "energy",
                                  "momentum_loc", "E2"]
        # too few samples for a rate fit
        assert execute(["fit", "--trajectory", str(outs[0] / "trajectory.csv"),
                        "--out", str(tmp_path / "f")]) == 1

    def test_check_init(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(SMALL_RUN)
        assert execute(["check-init", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        cols = read_columns(tmp_path / "check_init.csv")
        status = dict(zip(cols["condition"], cols["status"]))
        assert status["A1"] == "pass" and status["A2"] == "fail"

    def test_strict_config_fails(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(SMALL_RUN.replace("b0 = 0.25", "b0 = 0.25\nstrict = true"))
        assert execute(["check-init", "--config", str(cfg), "--out", str(tmp_path)]) == 1
        assert "condition-unsatisfiable" in capsys.readouterr().err

    def test_spectral(self, tmp_path):
        assert execute(["spectral", "--N", "1000", "--out", str(tmp_path)]) == 0
        cols = read_columns(tmp_path / "spectral.csv")
        assert cols["delta_hat"][0] > 0

    def test_radiation(self, tmp_path):
        assert execute(["radiation", "--b", "0.3", "0.33", "0.36", "--out", str(tmp_path)]) == 0
        cols = read_columns(tmp_path / "gamma_fit.csv")
        assert cols["slope"][0] == pytest.approx(-math.pi, rel=0.1)
