import csv
import hashlib
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from csvortex import ConfigurationError, inverse_G
from csvortex.cli import (
    EXIT_BRACKET,
    EXIT_CONFIG,
    EXIT_DIVERGED,
    EXIT_INCONCLUSIVE,
    EXIT_OK,
    EXIT_VERDICT,
    Setup,
    _bisection_G,
    main,
    read_field,
)

CENTER = {"x": math.pi, "y": math.pi}


def write_config(tmp_path, **sections):
    cfg = {"model": "ChernSimons", "grid": {"n1": 64, "n2": 64}, "vortices": [CENTER], **sections}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


def run(tmp_path, command, **sections):
    path = write_config(tmp_path, **sections)
    out = tmp_path / "out"
    return main([command, str(path), "--out", str(out)]), out


class TestSetup:
    def test_defaults(self):
        s = Setup({"model": "Taubes", "vortices": [CENTER]})
        assert s.grid.shape == (256, 256)
        assert s.domain.L1 == pytest.approx(2 * math.pi)
        assert s.vortices.N == 1

    @pytest.mark.parametrize("raw,where", [
        ({"model": "Maxwell", "vortices": [CENTER]}, "model"),
        ({"model": "Taubes", "vortices": [{"x": "a", "y": 1.0}]}, "vortices/0/x"),
        ({"model": "Taubes", "vortices": [{"x": 1.0, "y": 1.0, "n": 0}]}, "vortices/0/n"),
        ({"model": "Taubes", "vortices": []}, "vortices"),
        ({"model": "Taubes", "vortices": [CENTER], "solver": {"lambda": -1}}, "solver/lambda"),
        ({"model": "Taubes", "vortices": [CENTER], "grid": {"n1": 48}}, None),
        ({"model": "Taubes", "vortices": [CENTER], "extra": 1}, "<root>"),
    ])
    def test_rejects(self, raw, where):
        with pytest.raises(ConfigurationError) as info:
            Setup(raw)
        if where:
            assert f"'{where}'" in str(info.value)

    def test_echo_resolves_defaults(self):
        s = Setup({"model": "Taubes", "vortices": [CENTER], "solver": {"lambda": 1.0, "tol_iter": 1e-9}})
        e = s.echo()
        assert e["solver"]["tol_iter"] == 1e-9 and e["solver"]["K_factor"] == 3.0
        assert e["solver"]["lambda"] == 1.0 and "lam" not in e["solver"]

    def test_K_factor_checked(self):
        s = Setup({"model": "ChernSimons", "vortices": [CENTER], "solver": {"lambda": 1.0, "K_factor": 2.0}})
        with pytest.raises(ConfigurationError):
            s.solve_config()


def test_bisection_oracle():
    assert abs(_bisection_G(-10.0) - inverse_G(-10.0)) < 1e-12
    assert _bisection_G(-10.0) == pytest.approx(-10.999983298, abs=1e-9)


class TestSolve:
    def test_converged_manifest_and_digests(self, tmp_path):
        code, out = run(tmp_path, "solve", solver={"lambda": 12.0})
        assert code == EXIT_OK
        m = json.loads((out / "manifest.json").read_text())
        assert m["outcome"]["status"] == "Converged"
        assert m["observables"]["flux_error"] < 1e-8
        assert m["config"]["solver"]["lambda"] == 12.0
        assert m["fields"]["shape"] == [64, 64] and m["fields"]["dtype"] == "<f8"
        for name, digest in m["fields"]["files"].items():
            assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
        u = read_field(out / "fields" / "u.f64", (64, 64))
        assert u.max() < 0
        for key in ("tool_version", "python", "numpy", "platform", "started", "finished"):
            assert key in m

    def test_deterministic_fields(self, tmp_path):
        path = write_config(tmp_path, solver={"lambda": 12.0})
        digests = []
        for name in ("a", "b"):
            assert main(["solve", str(path), "--out", str(tmp_path / name)]) == EXIT_OK
            digests.append(json.loads((tmp_path / name / "manifest.json").read_text())["fields"]["files"])
        assert digests[0] == digests[1]

    def test_csv_mirror(self, tmp_path):
        path = write_config(tmp_path, solver={"lambda": 12.0})
        out = tmp_path / "out"
        assert main(["solve", str(path), "--out", str(out), "--csv"]) == EXIT_OK
        raw = read_field(out / "fields" / "w.f64", (64, 64))
        assert np.array_equal(np.loadtxt(out / "fields" / "w.csv", delimiter=","), raw)

    def test_diverged(self, tmp_path):
        code, out = run(tmp_path, "solve", solver={"lambda": 1.0})
        assert code == EXIT_DIVERGED
        m = json.loads((out / "manifest.json").read_text())
        assert m["observables"] is None

    def test_inconclusive(self, tmp_path):
        code, _ = run(tmp_path, "solve", solver={"lambda": 12.0, "max_iters": 3})
        assert code == EXIT_INCONCLUSIVE

    def test_missing_lambda(self, tmp_path):
        assert run(tmp_path, "solve")[0] == EXIT_CONFIG

    def test_bad_json(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{")
        assert main(["solve", str(path)]) == EXIT_CONFIG
        assert "not valid JSON" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["solve", str(tmp_path / "nope.json")]) == EXIT_CONFIG


class TestCritical:
    def test_taubes(self, tmp_path):
        code, out = run(tmp_path, "critical", model="Taubes", critical={"rel_tol": 0.05})
        assert code == EXIT_OK
        m = json.loads((out / "manifest.json").read_text())
        assert m["scan"]["lambda_c_estimate"] == pytest.approx(1 / math.pi, rel=0.05)
        with (out / "scan.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == m["scan"]["probes"]
        assert {r["status"] for r in rows} <= {"Converged", "Diverged", "Inconclusive"}

    def test_bracket_failure(self, tmp_path):
        code, out = run(tmp_path, "critical", model="Taubes", critical={"bracket": [0.01, 0.02], "cap": 0.1})
        assert code == EXIT_BRACKET
        assert "error" in json.loads((out / "manifest.json").read_text())

    @pytest.mark.parametrize("rel_tol", [0, -0.5])
    def test_bad_tolerance(self, tmp_path, rel_tol):
        assert run(tmp_path, "critical", critical={"rel_tol": rel_tol})[0] == EXIT_CONFIG


class TestSweep:
    def test_ladder(self, tmp_path):
        path = write_config(tmp_path, sweep={"lambdas": [9.0, 6.0, 12.0]})
        out = tmp_path / "out"
        assert main(["sweep", str(path), "--out", str(out), "--workers", "1"]) == EXIT_OK
        rep = json.loads((out / "manifest.json").read_text())["report"]
        assert rep["ladder"]["lambdas"] == [6.0, 9.0, 12.0] and rep["ladder"]["passed"]

    def test_pair_with_pool(self, tmp_path):
        pair = {"S": [{**CENTER, "n": 1}], "S_prime": [{**CENTER, "n": 2}]}
        path = write_config(tmp_path, model="Taubes", sweep={"pairs": [pair]}, critical={"rel_tol": 0.05})
        out = tmp_path / "out"
        assert main(["sweep", str(path), "--out", str(out), "--workers", "2"]) == EXIT_OK
        entry = json.loads((out / "manifest.json").read_text())["report"]["pairs"][0]
        assert entry["passed"] and entry["kappa_passed"]

    def test_empty(self, tmp_path):
        assert run(tmp_path, "sweep", sweep={"lambdas": []})[0] == EXIT_CONFIG

    def test_bad_workers(self, tmp_path):
        path = write_config(tmp_path, sweep={"lambdas": [6.0]})
        assert main(["sweep", str(path), "--workers", "0"]) == EXIT_CONFIG


class TestValidate:
    def test_passes(self, tmp_path):
        code, out = run(tmp_path, "validate", model="Taubes", grid={"n1": 128, "n2": 128},
                        validate={"taubes_scan": False})
        assert code == EXIT_OK
        m = json.loads((out / "manifest.json").read_text())
        assert m["passed"] and all(c["passed"] for c in m["checks"])

    def test_fault_injection(self, tmp_path):
        code, out = run(tmp_path, "validate", model="Taubes", grid={"n1": 128, "n2": 128},
                        validate={"taubes_scan": False, "green_constant_offset": 0.01})
        assert code == EXIT_VERDICT
        failed = [c["name"] for c in json.loads((out / "manifest.json").read_text())["checks"] if not c["passed"]]
        assert "integral of v0" in failed

    def test_symmetric_pair(self, tmp_path):
        vortices = [{"x": math.pi / 2, "y": math.pi}, {"x": 3 * math.pi / 2, "y": math.pi}]
        code, out = run(tmp_path, "validate", model="Taubes", grid={"n1": 128, "n2": 128}, vortices=vortices,
                        validate={"taubes_scan": False})
        assert code == EXIT_OK
        names = [c["name"] for c in json.loads((out / "manifest.json").read_text())["checks"]]
        assert any("symmetry" in n for n in names)


def test_module_entry_point(tmp_path):
    path = write_config(tmp_path, solver={"lambda": 1.0})
    proc = subprocess.run([sys.executable, "-m", "csvortex", "solve", str(path), "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_DIVERGED
    assert "Diverged" in proc.stdout
