import math
from functools import lru_cache

import numpy as np
import pytest

from csvortex import (
    ConfigurationError,
    ContractError,
    DomainError,
    ModelKind,
    SolveConfig,
    Status,
    build_subsolution,
    monotone_solve,
    residual,
    verify_maximality,
)
from csvortex.solver import first_iterate, state_from

from conftest import background_for


@lru_cache(maxsize=None)
def bg(n=64, mults=(1,)):
    pts = [(math.pi, math.pi)] if len(mults) == 1 else [(math.pi / 2, math.pi), (3 * math.pi / 2, math.pi)]
    return background_for(n, pts, list(mults))


@lru_cache(maxsize=None)
def solve(model, lam, n=64, mults=(1,), **opts):
    return monotone_solve(model, bg(n, mults), SolveConfig(lam=lam, **opts))


class TestConfig:
    @pytest.mark.parametrize("lam", [0.0, -1.0, math.inf, math.nan])
    def test_bad_lambda(self, lam):
        with pytest.raises(ConfigurationError):
            SolveConfig(lam=lam)

    def test_K_factor_checked_per_model(self):
        with pytest.raises(ConfigurationError):
            SolveConfig(lam=1.0, K_factor=1.5).validate_for(ModelKind.CHERN_SIMONS)
        SolveConfig(lam=1.0, K_factor=1.5).validate_for(ModelKind.TAUBES)

    def test_with_lambda(self):
        cfg = SolveConfig(lam=2.0, tol_iter=1e-9)
        assert cfg.with_lambda(5).lam == 5.0 and cfg.with_lambda(5).tol_iter == 1e-9
        assert cfg.K == 6.0

    def test_bad_tolerances(self):
        with pytest.raises(ConfigurationError):
            SolveConfig(lam=1.0, tol_iter=0.0)
        with pytest.raises(ConfigurationError):
            SolveConfig(lam=1.0, max_iters=0)


class TestConverged:
    @pytest.mark.parametrize("model,lam", [("ChernSimons", 12.0), ("AbelianHiggs", 3 / math.pi), ("Taubes", 0.6)])
    def test_solution_properties(self, model, lam):
        out = solve(model, lam)
        assert out.status is Status.CONVERGED
        assert residual(model, bg(), out.w, lam) <= 1e-8
        assert out.quantization_error < 1e-6
        assert out.max_violation <= 1e-12
        u = state_from(model, bg(), out.w).values
        assert u.max() < 0

    def test_taubes_transform_free(self):
        out = solve("Taubes", 0.6)
        u = state_from("Taubes", bg(), out.w).values
        assert np.array_equal(u, bg().v0.values + out.w.values)

    def test_deterministic(self):
        a = monotone_solve("ChernSimons", bg(), SolveConfig(lam=12.0))
        b = monotone_solve("ChernSimons", bg(), SolveConfig(lam=12.0))
        assert np.array_equal(a.w.values, b.w.values) and a.iterations == b.iterations

    def test_first_step_choice_same_limit(self):
        exact = solve("ChernSimons", 12.0, n=128)
        plain = solve("ChernSimons", 12.0, n=128, exact_first_step=False)
        assert plain.converged
        assert np.abs(exact.w.values - plain.w.values).max() < 1e-8

    def test_first_iterate_is_a_scheme_step(self):
        # away from the cores the exact step agrees with the discrete resolvent step
        b = bg(128)
        K = 36.0
        from csvortex.domain import spectral_ops

        ops = spectral_ops(b.domain, b.grid)
        discrete = ops.helmholtz(K * b.v0.values + b.source, K)
        far = b.distance_to_vortices() > 1.0
        assert np.abs(first_iterate(b, K) - discrete)[far].max() < 1e-3

    def test_warm_start(self):
        hi = solve("ChernSimons", 20.0, n=128)
        cold = solve("ChernSimons", 12.0, n=128)
        warm = monotone_solve("ChernSimons", bg(128), SolveConfig(lam=12.0), hi.w)
        assert warm.converged
        assert warm.iterations < cold.iterations
        assert np.abs(warm.w.values - cold.w.values).max() < 1e-8

    def test_lookup_agrees(self):
        out = solve("ChernSimons", 12.0, use_lookup=True)
        assert np.abs(out.w.values - solve("ChernSimons", 12.0).w.values).max() < 1e-9

    def test_dealias_small_effect(self):
        out = solve("ChernSimons", 12.0, n=128, dealias=True)
        ref = solve("ChernSimons", 12.0, n=128)
        assert out.converged
        assert np.abs(out.w.values - ref.w.values).max() < 1e-3

    def test_snapshots(self):
        out = solve("ChernSimons", 12.0, snapshot_every=50)
        its = [i for i, _ in out.snapshots]
        assert its[0] == 0 and its[-1] == out.iterations
        for (_, a), (_, b) in zip(out.snapshots, out.snapshots[1:]):
            assert (b - a).max() <= 1e-12

    def test_summary(self):
        s = solve("ChernSimons", 12.0).summary()
        assert s["status"] == "Converged" and s["iterations"] > 0

    def test_two_vortices(self):
        out = solve("ChernSimons", 20.0, n=128, mults=(1, 2))
        assert out.converged and out.quantization_error < 1e-6


class TestNotConverged:
    def test_integral_bound(self):
        out = solve("ChernSimons", 0.9 * 27 / (4 * math.pi))
        assert out.status is Status.DIVERGED and out.reason == "integral bound" and out.iterations == 0

    def test_below_threshold_without_shortcut(self):
        out = solve("ChernSimons", 2.0, bound_check=False)
        assert out.status is Status.DIVERGED
        assert out.reason in ("descent certificate", "floor", "stall")
        assert out.quantization_error is None

    def test_taubes_below_critical(self):
        out = solve("Taubes", 0.3, bound_check=False)
        assert out.status is Status.DIVERGED

    def test_budget(self):
        out = solve("ChernSimons", 12.0, max_iters=3)
        assert out.status is Status.INCONCLUSIVE and out.iterations == 3

    def test_coarse_grid_trips_contract(self):
        # K = 60 resolves the screening length 1/√K only on finer grids
        with pytest.raises(ContractError, match="increased"):
            monotone_solve("ChernSimons", bg(64), SolveConfig(lam=20.0))

    def test_bad_start_trips_contract(self):
        # a start below the maximal solution is not a supersolution; the iterates rise
        low = solve("ChernSimons", 12.0).w - 1.0
        with pytest.raises(ContractError):
            monotone_solve("ChernSimons", bg(), SolveConfig(lam=12.0), low)


class TestSubsolution:
    def test_certificate(self):
        cert = build_subsolution("ChernSimons", bg(), 0.8)
        assert cert.lambda_min_verified < 12.0
        assert cert.defect(bg(), 12.0) >= -1e-8
        assert (bg().v0.values + cert.w_star.values).max() < 0

    def test_maximality(self):
        cert = build_subsolution("ChernSimons", bg(), 0.8)
        cfg = SolveConfig(lam=12.0, snapshot_every=25)
        assert verify_maximality("ChernSimons", bg(), cfg, cert)

    def test_taubes_maximality(self):
        cert = build_subsolution("Taubes", bg(), 0.3)
        lam = 2 * cert.lambda_min_verified
        assert verify_maximality("Taubes", bg(), SolveConfig(lam=lam), cert)

    def test_below_certified(self):
        cert = build_subsolution("ChernSimons", bg(), 0.8)
        with pytest.raises(DomainError):
            verify_maximality("ChernSimons", bg(), SolveConfig(lam=1.0), cert)

    @pytest.mark.parametrize("eps", [0.0, 1.3, -1.0])
    def test_bad_epsilon(self, eps):
        with pytest.raises(ConfigurationError):
            build_subsolution("ChernSimons", bg(), eps)
