import json
import subprocess
import sys
from pathlib import Path

import pytest

from enscascade.cli import EXIT_OK, EXIT_VALIDATION, main
from enscascade.config import RunConfig, load_config, parse_lines

SMALL = ["n=16", "ic_kmax=4", "steps=20"]


def simulate(tmp_path, name, extra=()):
    out = tmp_path / name
    assert main(["simulate", "-o", str(out), *sum([["-s", s] for s in [*SMALL, *extra]], [])]) == EXIT_OK
    return out


def analyze(rundir, outdir=None, extra=()):
    args = ["analyze", str(rundir)]
    if outdir is not None:
        args += ["-o", str(outdir)]
    for s in extra:
        args += ["-s", s]
    return main(args)


class TestDefaults:
    def test_lists_every_key(self, capsys):
        assert main(["defaults"]) == EXIT_OK
        text = capsys.readouterr().out
        assert load_config(None, text.splitlines()) == RunConfig()

    def test_module_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "enscascade", "defaults"], capture_output=True, text=True)
        assert out.returncode == 0 and "R0 = 0.2" in out.stdout


class TestSimulate:
    def test_initial_data_only(self, tmp_path):
        out = simulate(tmp_path, "t0", ["T=0"])
        m = json.loads((out / "manifest.json").read_text())
        assert list(m["files"]) == ["snapshots/omega_00000.ensc"] and m["times"] == [0.0]

    def test_snapshot_count(self, tmp_path):
        out = simulate(tmp_path, "run", ["snapshot_every=7"])
        m = json.loads((out / "manifest.json").read_text())
        assert len(m["files"]) == 4 and m["times"][-1] == 0.05

    def test_checksums_reproducible(self, tmp_path):
        a = json.loads((simulate(tmp_path, "a") / "manifest.json").read_text())
        b = json.loads((simulate(tmp_path, "b") / "manifest.json").read_text())
        assert a["files"] == b["files"] and a["history"] == b["history"]

    def test_seed_changes_data(self, tmp_path):
        a = json.loads((simulate(tmp_path, "a") / "manifest.json").read_text())
        b = json.loads((simulate(tmp_path, "b", ["seed=1"]) / "manifest.json").read_text())
        assert a["files"] != b["files"]


class TestAnalyze:
    def test_zero_field_is_degenerate(self, tmp_path, capsys):
        run = simulate(tmp_path, "z", ["ic=zero"])
        capsys.readouterr()
        assert analyze(run) == EXIT_OK
        summary = json.loads(capsys.readouterr().out)
        assert summary["degenerate"] is True and summary["sigma0"] is None
        rep = json.loads((run / "report.json").read_text())
        assert rep["rows"] == [] and "degenerate" in rep["notes"][0]

    def test_reports_bit_identical(self, tmp_path):
        run = simulate(tmp_path, "r")
        assert analyze(run, tmp_path / "o1") == EXIT_OK
        assert analyze(run, tmp_path / "o2") == EXIT_OK
        for name in ("report.json", "report.csv"):
            assert (tmp_path / "o1" / name).read_bytes() == (tmp_path / "o2" / name).read_bytes()
        m = json.loads((tmp_path / "o1" / "analysis_manifest.json").read_text())
        assert set(m["files"]) == {"report.json", "report.csv"}

    def test_config_mismatch(self, tmp_path, capsys):
        run = simulate(tmp_path, "m")
        assert analyze(run, extra=[*SMALL, "nu=2"]) == EXIT_VALIDATION
        assert "mismatch" in capsys.readouterr().err

    def test_analysis_overrides_accepted(self, tmp_path):
        run = simulate(tmp_path, "ov")
        assert analyze(run, tmp_path / "o", extra=[*SMALL, "beta=0.9", "coherence_samples=64"]) == EXIT_OK
        rep = json.loads((tmp_path / "o" / "report.json").read_text())
        assert rep["beta"] == 0.9 and rep["analysis_config"]["coherence_samples"] == 64

    def test_missing_snapshot(self, tmp_path, capsys):
        run = simulate(tmp_path, "miss")
        sorted((run / "snapshots").iterdir())[-1].unlink()
        assert analyze(run) == EXIT_VALIDATION
        assert "missing" in capsys.readouterr().err

    def test_corrupt_snapshot(self, tmp_path, capsys):
        run = simulate(tmp_path, "bad")
        p = sorted((run / "snapshots").iterdir())[3]
        data = bytearray(p.read_bytes())
        data[-1] ^= 0xFF
        p.write_bytes(bytes(data))
        assert analyze(run) == EXIT_VALIDATION
        assert "checksum" in capsys.readouterr().err

    def test_missing_final_snapshot(self, tmp_path, capsys):
        run = simulate(tmp_path, "fin")
        mf = run / "manifest.json"
        m = json.loads(mf.read_text())
        last = sorted(m["files"])[-1]
        del m["files"][last]
        mf.write_text(json.dumps(m))
        assert analyze(run) == EXIT_VALIDATION
        assert "t = T" in capsys.readouterr().err

    def test_missing_manifest(self, tmp_path, capsys):
        assert analyze(tmp_path) == EXIT_VALIDATION
        assert "manifest" in capsys.readouterr().err


class TestValidation:
    @pytest.mark.parametrize(
        "setting,message",
        [
            ("K1=32", "K1 >= 64"),
            ("K2=4", "K2 >= 8"),
            ("verify_scales=0.3", "0 < R' < R=0.2"),
            ("verify_scales=0.1,0.15", "0 < R' < R=0.1"),
            ("C0=20", "certified cutoff constant"),
            ("R0=0.5", "strictly inside"),
            ("T=0.01", "T > R0^2"),
            ("beta=1.5", "0 < beta < 1"),
            ("q=2", "exceed 2"),
            ("rho=0.4", "1/2 <= rho < 1"),
            ("ic=vortex", "expected one of"),
            ("n=15", "even integer"),
            ("bogus=1", "unknown configuration key"),
            ("n=abc", "cannot parse"),
        ],
    )
    def test_rejected(self, tmp_path, capsys, setting, message):
        assert main(["simulate", "-o", str(tmp_path / "x"), "-s", setting]) == EXIT_VALIDATION
        assert message in capsys.readouterr().err
        assert not (tmp_path / "x").exists()

    def test_config_file(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("# small run\nn = 16\nic_kmax = 4  # inline comment\nsteps = 10\n")
        cfg = load_config(p, ["steps=12"])
        assert (cfg.n, cfg.ic_kmax, cfg.steps) == (16, 4.0, 12)

    def test_malformed_line(self):
        from enscascade.config import ConfigError

        with pytest.raises(ConfigError, match="line 2"):
            parse_lines(["n = 16", "garbage"])

    def test_none_values(self):
        assert parse_lines(["C3 = none", "C1 = 2.5"]) == {"C3": None, "C1": 2.5}


class TestVerify:
    def test_suites_pass_and_write_json(self, tmp_path, capsys):
        out = tmp_path / "verify.json"
        code = main(["verify", "-s", "n=24", "-s", "verify_trials=5", "--skip-budget", "-o", str(out)])
        res = json.loads(out.read_text())
        assert code == EXIT_OK and res["passed"]
        assert {s["suite"] for s in res["suites"]} == {
            "cutoff_certificates", "refinement", "ensemble_sandwich", "solver_stokes_decay"
        }
        assert json.loads(capsys.readouterr().out) == res
