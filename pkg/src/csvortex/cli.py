"""Command-line front end: solve, critical, sweep and validate from a JSON config."""
from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import asdict, fields
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import jsonschema
import numpy as np

from .critical import (
    find_critical_lambda,
    necessary_bound,
    verify_lambda_monotonicity,
    verify_S_monotonicity,
)
from .domain import GridSpec, TorusDomain, VortexConfiguration, integrate
from .errors import ConfigurationError, ContractError, DomainError, ScanError
from .greens import build_background, crosscheck_spectral, greens_values, laplacian_defect
from .observables import energy_flux_charge, quantization_integral, reconstruct_fields
from .solver import SolveConfig, Status, monotone_solve
from .transform import ModelKind, forward_F, inverse_G

log = logging.getLogger("csvortex")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_INCONCLUSIVE = 3
EXIT_BRACKET = 4
EXIT_VERDICT = 5
EXIT_CONTRACT = 6

FIELD_NAMES = ("u", "higgs_sq", "magnetic", "charge_density", "w", "v0")

_VORTICES = {
    "type": "array",
    "minItems": 1,
    "items": {
        "type": "object",
        "required": ["x", "y"],
        "additionalProperties": False,
        "properties": {
            "x": {"type": "number"},
            "y": {"type": "number"},
            "n": {"type": "integer", "minimum": 1},
        },
    },
}

_SOLVER_KEYS = {
    "lambda": {"type": "number", "exclusiveMinimum": 0},
    "K_factor": {"type": "number", "exclusiveMinimum": 0},
    "tol_iter": {"type": "number", "exclusiveMinimum": 0},
    "tol_residual": {"type": "number", "exclusiveMinimum": 0},
    "max_iters": {"type": "integer", "minimum": 1},
    "divergence_floor": {"type": "number"},
    "stall_window": {"type": "integer", "minimum": 2},
    "snapshot_every": {"type": "integer", "minimum": 0},
    "descent_certificate": {"type": "boolean"},
    "bound_check": {"type": "boolean"},
    "exact_first_step": {"type": "boolean"},
    "use_lookup": {"type": "boolean"},
    "dealias": {"type": "boolean"},
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "vortices"],
    "properties": {
        "model": {"enum": [k.value for k in ModelKind]},
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"L1": {"type": "number", "exclusiveMinimum": 0},
                           "L2": {"type": "number", "exclusiveMinimum": 0}},
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"n1": {"type": "integer", "minimum": 16},
                           "n2": {"type": "integer", "minimum": 16}},
        },
        "vortices": _VORTICES,
        "solver": {"type": "object", "additionalProperties": False, "properties": _SOLVER_KEYS},
        "critical": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "bracket": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "rel_tol": {"type": "number"},
                "cap": {"type": "number", "exclusiveMinimum": 0},
                "inconclusive": {"enum": ["diverged", "converged", "raise"]},
                "warm_start": {"type": "boolean"},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambdas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "pairs": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["S", "S_prime"],
                        "additionalProperties": False,
                        "properties": {"S": _VORTICES, "S_prime": _VORTICES},
                    },
                },
            },
        },
        "validate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "green_constant_offset": {"type": "number"},
                "laplacian_tol": {"type": "number", "exclusiveMinimum": 0},
                "taubes_scan": {"type": "boolean"},
            },
        },
    },
}


class Setup:
    """A parsed and validated run configuration."""

    def __init__(self, raw: dict):
        try:
            jsonschema.validate(raw, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigurationError(f"config field '{where}': {exc.message}") from None
        self.raw = raw
        self.model = ModelKind.parse(raw["model"])
        self.domain = TorusDomain(**raw.get("domain", {}))
        g = raw.get("grid", {})
        self.grid = GridSpec(g.get("n1", 256), g.get("n2", g.get("n1", 256)))
        self.vortices = _vortex_config(self.domain, raw["vortices"])
        self.solver_options = dict(raw.get("solver", {}))
        self.critical = dict(raw.get("critical", {}))
        self.sweep = dict(raw.get("sweep", {}))
        self.validate = dict(raw.get("validate", {}))

    @classmethod
    def load(cls, path) -> "Setup":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
        return cls(raw)

    def solve_config(self, lam: float | None = None) -> SolveConfig:
        opts = dict(self.solver_options)
        given = opts.pop("lambda", None)
        lam = given if lam is None else lam
        if lam is None:
            raise ConfigurationError("config field 'solver/lambda' is required for this command")
        cfg = SolveConfig(lam=float(lam), **opts)
        cfg.validate_for(self.model)
        return cfg

    def echo(self) -> dict:
        """Fully resolved configuration, defaults included."""
        cfg = {f.name: getattr(self._defaults(), f.name) for f in fields(SolveConfig) if f.name != "lam"}
        cfg.update({k: v for k, v in self.solver_options.items() if k != "lambda"})
        cfg["lambda"] = self.solver_options.get("lambda")
        return {
            "model": self.model.value,
            "domain": {"L1": self.domain.L1, "L2": self.domain.L2},
            "grid": {"n1": self.grid.n1, "n2": self.grid.n2, "offset": self.grid.offset},
            "vortices": self.vortices.as_dict(),
            "solver": cfg,
            "critical": self.critical,
            "sweep": self.sweep,
            "validate": self.validate,
        }

    @staticmethod
    def _defaults() -> SolveConfig:
        return SolveConfig(lam=1.0)


def _vortex_config(domain: TorusDomain, items) -> VortexConfiguration:
    pts = [(float(v["x"]), float(v["y"])) for v in items]
    mults = [int(v.get("n", 1)) for v in items]
    return VortexConfiguration.create(domain, pts, mults)


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _environment() -> dict:
    return {
        "tool_version": tool_version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "platform": platform.platform(),
    }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_field(path: Path, values: np.ndarray) -> str:
    """Raw little-endian float64 in row-major order (first index x); returns the sha256."""
    path.write_bytes(np.ascontiguousarray(values, dtype="<f8").tobytes(order="C"))
    return _sha256(path)


def read_field(path, shape) -> np.ndarray:
    return np.fromfile(path, dtype="<f8").reshape(shape)


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (Status, ModelKind)):
        return obj.value
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _finite(x):
    """JSON has no inf/nan; report them as strings."""
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def cmd_solve(setup: Setup, out: Path, *, csv_mirror: bool = False) -> int:
    started = _now()
    cfg = setup.solve_config()
    bg = build_background(setup.domain, setup.grid, setup.vortices)
    t0 = time.perf_counter()
    outcome = monotone_solve(setup.model, bg, cfg)
    elapsed = time.perf_counter() - t0
    arrays = {"w": outcome.w.values, "v0": bg.v0.values}
    observables = None
    if outcome.converged:
        phys = reconstruct_fields(setup.model, bg, outcome)
        totals = energy_flux_charge(phys, bg.N)
        arrays.update(u=phys.u.values, higgs_sq=phys.higgs_sq.values, magnetic=phys.magnetic.values,
                      charge_density=phys.charge_density.values)
        observables = {**totals.as_dict(), "max_higgs_sq": phys.higgs_sq.max(), "lambda": cfg.lam,
                       "quantization_integral": quantization_integral(setup.model, phys.u, cfg.lam)}
    files = _emit_fields(out, arrays, csv_mirror)
    manifest = {
        "command": "solve",
        "config": setup.echo(),
        "outcome": {k: _finite(v) for k, v in outcome.summary().items()},
        "observables": observables,
        "fields": {"shape": list(setup.grid.shape), "dtype": "<f8", "order": "C", "first_index": "x",
                   "files": files},
        "started": started,
        "finished": _now(),
        "solve_seconds": elapsed,
        **_environment(),
    }
    _write_json(out / "manifest.json", manifest)
    print(f"{outcome.status.value} ({outcome.reason}) after {outcome.iterations} iterations; "
          f"residual {outcome.residual:.3e}")
    if observables:
        print(f"quantization error {outcome.quantization_error:.3e}; "
              f"E = Phi = {totals.Phi:.12g}, Q = {totals.Q:.12g}")
    return {Status.CONVERGED: EXIT_OK, Status.DIVERGED: EXIT_DIVERGED,
            Status.INCONCLUSIVE: EXIT_INCONCLUSIVE}[outcome.status]


def _emit_fields(out: Path, arrays: dict, csv_mirror: bool) -> dict:
    fdir = out / "fields"
    fdir.mkdir(parents=True, exist_ok=True)
    files = {}
    for name in FIELD_NAMES:
        if name not in arrays:
            continue
        files[f"fields/{name}.f64"] = write_field(fdir / f"{name}.f64", arrays[name])
        if csv_mirror:
            np.savetxt(fdir / f"{name}.csv", arrays[name], delimiter=",", fmt="%.17g")
            files[f"fields/{name}.csv"] = _sha256(fdir / f"{name}.csv")
    return files


def _write_scan_csv(path: Path, probes) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda", "status", "iterations", "reason", "seconds", "max_violation"])
        for p in probes:
            writer.writerow([repr(p.lam), p.status.value, p.iterations, p.reason, f"{p.seconds:.3f}",
                             repr(p.max_violation)])


def _scan_options(setup: Setup) -> dict:
    c = setup.critical
    rel_tol = c.get("rel_tol", 1e-2)
    if not (isinstance(rel_tol, (int, float)) and rel_tol > 0):
        raise ConfigurationError(f"config field 'critical/rel_tol' must be positive, got {rel_tol!r}")
    bracket = c.get("bracket")
    if bracket is not None and not 0 < bracket[0] < bracket[1]:
        raise ConfigurationError("config field 'critical/bracket' must satisfy 0 < lo < hi")
    return {
        "bracket": tuple(bracket) if bracket else None,
        "rel_tol": float(rel_tol),
        "cap": float(c.get("cap", 1e4)),
        "inconclusive": c.get("inconclusive", "diverged"),
        "warm_start": bool(c.get("warm_start", False)),
    }


def cmd_critical(setup: Setup, out: Path) -> int:
    started = _now()
    opts = _scan_options(setup)
    cfg = setup.solve_config(lam=setup.solver_options.get("lambda", 1.0))
    bg = build_background(setup.domain, setup.grid, setup.vortices)
    out.mkdir(parents=True, exist_ok=True)
    try:
        scan = find_critical_lambda(setup.model, bg, opts.pop("bracket"), opts.pop("rel_tol"), cfg, **opts)
    except ScanError as exc:
        _write_scan_csv(out / "scan.csv", exc.probes)
        probes = [{k: _finite(v) for k, v in asdict(p).items()} for p in exc.probes]
        _write_json(out / "manifest.json", {"command": "critical", "config": setup.echo(), "error": str(exc),
                                            "probes": probes, "started": started,
                                            "finished": _now(), **_environment()})
        print(f"bracketing failed: {exc}", file=sys.stderr)
        for p in exc.probes:
            print(f"  lambda={p.lam:.8g} {p.status.value} ({p.reason})", file=sys.stderr)
        return EXIT_BRACKET
    _write_scan_csv(out / "scan.csv", scan.probes)
    summary = scan.summary()
    _write_json(out / "manifest.json", {
        "command": "critical",
        "config": setup.echo(),
        "scan": summary,
        "files": {"scan.csv": _sha256(out / "scan.csv")},
        "started": started,
        "finished": _now(),
        **_environment(),
    })
    flag = "pass" if scan.bound_satisfied else "FAIL"
    print(f"lambda_c in [{scan.lower:.8g}, {scan.upper:.8g}], estimate {scan.lambda_c_estimate:.8g}, "
          f"kappa_c {scan.kappa_c:.8g}; bound {scan.lower_bound:.8g}: {flag}")
    return EXIT_OK


def _executor(workers: int | None):
    n = workers or os.cpu_count() or 1
    if n <= 1:
        return None
    return concurrent.futures.ProcessPoolExecutor(max_workers=n)


def cmd_sweep(setup: Setup, out: Path, *, workers: int | None = None) -> int:
    started = _now()
    lambdas = setup.sweep.get("lambdas", [])
    pairs = setup.sweep.get("pairs", [])
    if not lambdas and not pairs:
        raise ConfigurationError("config field 'sweep' needs a non-empty 'lambdas' ladder or 'pairs' list")
    if "lambdas" in setup.sweep and not lambdas:
        raise ConfigurationError("config field 'sweep/lambdas' is empty")
    report = {"ladder": None, "pairs": []}
    failures = []
    pool = _executor(workers)
    mapper = pool.map if pool else map
    try:
        if lambdas:
            bg = build_background(setup.domain, setup.grid, setup.vortices)
            cfg = setup.solve_config(lam=lambdas[0])
            res = verify_lambda_monotonicity(setup.model, bg, sorted(lambdas), cfg, mapper=mapper)
            report["ladder"] = {
                "lambdas": res.lambdas,
                "min_increase": res.margins,
                "tolerance": res.tol,
                "passed": res.passed,
            }
            for (a, b), m in zip(zip(res.lambdas, res.lambdas[1:]), res.margins):
                ok = m > -res.tol
                print(f"lambda {a:g} -> {b:g}: min(w_b - w_a) = {m:.3e} {'pass' if ok else 'FAIL'}")
                if not ok:
                    failures.append(f"lambda pair ({a}, {b})")
        opts = _scan_options(setup)
        opts.pop("bracket")
        rel_tol = opts.pop("rel_tol")
        for i, pair in enumerate(pairs):
            S = _vortex_config(setup.domain, pair["S"])
            Sp = _vortex_config(setup.domain, pair["S_prime"])
            cfg = setup.solve_config(lam=setup.solver_options.get("lambda", 1.0))
            res = verify_S_monotonicity(setup.model, setup.domain, setup.grid, S, Sp, rel_tol, cfg,
                                        mapper=mapper, **opts)
            entry = {"S": S.as_dict(), "S_prime": Sp.as_dict(), "scan_S": res.scan.summary(),
                     "scan_S_prime": res.scan_prime.summary(), "slack": res.slack, "passed": res.passed,
                     "kappa_passed": res.kappa_passed}
            report["pairs"].append(entry)
            print(f"pair {i}: lambda_c(S) = {res.scan.lambda_c_estimate:.6g}, "
                  f"lambda_c(S') = {res.scan_prime.lambda_c_estimate:.6g}, slack {res.slack:.3g}: "
                  f"{'pass' if res.passed else 'FAIL'}")
            if not res.passed:
                failures.append(f"pair {i}")
    finally:
        if pool:
            pool.shutdown()
    _write_json(out / "manifest.json", {"command": "sweep", "config": setup.echo(), "report": report,
                                        "failures": failures, "started": started, "finished": _now(),
                                        **_environment()})
    if failures:
        print("verdict failures: " + ", ".join(failures), file=sys.stderr)
        return EXIT_VERDICT
    return EXIT_OK


def _bisection_G(v: float) -> float:
    """Bisection on 1 + u - e^u - v over [v - 1, 0] down to adjacent doubles."""
    lo, hi = v - 1.0, 0.0
    while True:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            return mid
        if mid - math.expm1(mid) - v < 0:
            lo = mid
        else:
            hi = mid


def _reflection_check(bg) -> float | None:
    """max |v0(x) - v0(2c - x)| for c the vortex centroid, when the configuration is point-symmetric."""
    dom, conf = bg.domain, bg.config
    pts = np.array(conf.points)
    c = pts.mean(axis=0)
    image = {(round((2 * c[0] - x) % dom.L1, 9), round((2 * c[1] - y) % dom.L2, 9)): n
             for (x, y), n in zip(conf.points, conf.multiplicities)}
    own = {(round(x % dom.L1, 9), round(y % dom.L2, 9)): n for (x, y), n in zip(conf.points, conf.multiplicities)}
    if image != own:
        return None
    X, Y = bg.grid.coordinates(dom)
    Xr, Yr = 2 * c[0] - X, 2 * c[1] - Y
    direct = sum(4 * np.pi * n * greens_values(dom, X - px, Y - py) for (px, py), n in
                 zip(conf.points, conf.multiplicities))
    mirrored = sum(4 * np.pi * n * greens_values(dom, Xr - px, Yr - py) for (px, py), n in
                   zip(conf.points, conf.multiplicities))
    return float(np.abs(direct - mirrored).max())


def _log_slopes(bg) -> list[float]:
    """d v0 / d ln r at each vortex from circle averages at r = 1e-5 and 1e-4."""
    dom, conf = bg.domain, bg.config
    theta = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    out = []
    for p, n in zip(conf.points, conf.multiplicities):
        means = []
        for r in (1e-5, 1e-4):
            X, Y = p[0] + r * np.cos(theta), p[1] + r * np.sin(theta)
            v = sum(4 * np.pi * m * greens_values(dom, X - q[0], Y - q[1])
                    for q, m in zip(conf.points, conf.multiplicities))
            means.append(float(np.mean(v)))
        out.append(abs((means[1] - means[0]) / math.log(10.0) - 2 * n))
    return out


def run_checks(setup: Setup) -> list[tuple[str, float, float, bool]]:
    """The built-in verification table: (name, measured, tolerance, passed)."""
    checks = []

    def add(name, value, tol):
        checks.append((name, value, tol, bool(value <= tol)))

    u = np.linspace(-40.0, 0.0, 100_000)
    add("G(F(u)) = u on [-40, 0]", float(np.abs(inverse_G(forward_F(u)) - u).max()), 1e-12)
    add("F(G(v)) = v on [-40, 0]", float(np.abs(forward_F(inverse_G(u)) - u).max()), 1e-12)
    add("G(-10) vs bisection", abs(inverse_G(-10.0) - _bisection_G(-10.0)), 1e-12)

    v = setup.validate
    bg = build_background(setup.domain, setup.grid, setup.vortices,
                          constant_offset=float(v.get("green_constant_offset", 0.0)))
    add("integral of v0", abs(integrate(bg.v0)), 1e-12)
    add("theta vs Fourier v0 (4 cells out)", crosscheck_spectral(bg), 1e-3)
    add("Laplacian of G + 1/|Omega|", laplacian_defect(bg), float(v.get("laplacian_tol", 1e-4)))
    for (p, n), err in zip(zip(bg.config.points, bg.config.multiplicities), _log_slopes(bg)):
        add(f"log slope 2n at ({p[0]:.4g}, {p[1]:.4g})", err, 1e-3)
    sym = _reflection_check(bg)
    if sym is not None:
        add("v0 point-reflection (vortex swap) symmetry", sym, 1e-10)

    taubes = ModelKind.TAUBES
    dom = setup.domain
    tbg = build_background(dom, setup.grid, setup.vortices)
    lam_c = necessary_bound(taubes, dom, tbg.N)
    tcfg = SolveConfig(lam=2 * lam_c)
    out = monotone_solve(taubes, tbg, tcfg)
    checks.append(("Taubes at 2 lambda_c: iterations to converge", float(out.iterations),
                   float(tcfg.max_iters), out.converged))
    if out.converged:
        add("Taubes quantization (relative)", out.quantization_error, 1e-3)
        add("Taubes monotone iterates", max(out.max_violation, 0.0), 1e-12)
        top = float((tbg.v0.values + out.w.values).max())
        checks.append(("Taubes max u (must be < 0)", top, 0.0, top < 0.0))
    if v.get("taubes_scan", True):
        scan = find_critical_lambda(taubes, tbg)
        add("Taubes lambda_c vs 4 pi N/|Omega| (relative)", abs(scan.lambda_c_estimate / lam_c - 1), 2e-2)
    return checks


def cmd_validate(setup: Setup, out: Path | None = None) -> int:
    t0 = time.perf_counter()
    checks = run_checks(setup)
    width = max(len(c[0]) for c in checks)
    print(f"{'check':<{width}}  {'measured':>12}  {'tolerance':>10}  result")
    for name, value, tol, ok in checks:
        print(f"{name:<{width}}  {value:>12.3e}  {tol:>10.1e}  {'pass' if ok else 'FAIL'}")
    passed = all(c[3] for c in checks)
    print(f"{sum(c[3] for c in checks)}/{len(checks)} checks passed in {time.perf_counter() - t0:.1f} s")
    if out is not None:
        _write_json(out / "manifest.json", {
            "command": "validate",
            "config": setup.echo(),
            "checks": [{"name": n, "measured": _finite(m), "tolerance": t, "passed": ok}
                       for n, m, t, ok in checks],
            "passed": passed,
            "finished": _now(),
            **_environment(),
        })
    return EXIT_OK if passed else EXIT_VERDICT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csvortex",
        description="Doubly periodic self-dual vortices: monotone iteration, critical coupling and checks.",
    )
    parser.add_argument("command", choices=["solve", "critical", "sweep", "validate"])
    parser.add_argument("config", help="JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory (default: run-<command>)")
    parser.add_argument("--workers", type=int, default=None, help="processes for sweep (default: all cores)")
    parser.add_argument("--csv", action="store_true", help="also write CSV mirrors of field files")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out or f"run-{args.command}")
    try:
        if args.workers is not None and args.workers < 1:
            raise ConfigurationError("--workers must be >= 1")
        setup = Setup.load(args.config)
        if args.command == "solve":
            return cmd_solve(setup, out, csv_mirror=args.csv)
        if args.command == "critical":
            return cmd_critical(setup, out)
        if args.command == "sweep":
            return cmd_sweep(setup, out, workers=args.workers)
        return cmd_validate(setup, out if args.out else None)
    except (ConfigurationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContractError as exc:
        print(f"numerical contract violated: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
