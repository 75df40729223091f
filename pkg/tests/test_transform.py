import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import lambertw

from csvortex import DomainError, ModelKind, forward_F, inverse_G, nonlinearity, nonlinearity_slope_bound
from csvortex.transform import GLookup, nonlinearity_dv, nonlinearity_envelope, nonlinearity_sup


def bisection_G(v):
    lo, hi = v - 1.0, 0.0
    while True:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            return mid
        if mid - math.expm1(mid) - v < 0:
            lo = mid
        else:
            hi = mid


def lambert_G(v):
    # 1 + u - e^u = v  <=>  u = v - 1 - W0(-e^{v-1}); valid away from the branch point v = 0
    return float(np.real(v - 1.0 - lambertw(-math.exp(v - 1.0), 0)))


class TestForward:
    def test_fixed_point(self):
        assert forward_F(0.0) == 0.0

    def test_minus_one(self):
        assert forward_F(-1.0) == pytest.approx(-1 / math.e, abs=1e-15)
        assert forward_F(-1.0) == pytest.approx(-0.3678794412, abs=1e-10)

    def test_asymptote(self):
        assert abs(forward_F(-30.0) - (-29.0)) < 1e-12

    def test_small_u_no_cancellation(self):
        u = -1e-6
        assert forward_F(u) == pytest.approx(-(u * u) / 2 - u ** 3 / 6, rel=1e-12)

    def test_rejects_positive(self):
        with pytest.raises(DomainError):
            forward_F(1e-300)

    def test_array_shape(self):
        u = -np.arange(12.0).reshape(3, 4)
        assert forward_F(u).shape == (3, 4)


class TestInverse:
    def test_zero(self):
        assert inverse_G(0.0) == 0.0

    def test_round_trip_point(self):
        assert inverse_G(forward_F(-2.0)) == pytest.approx(-2.0, abs=1e-12)

    def test_minus_ten_against_oracles(self):
        g = inverse_G(-10.0)
        assert abs(g - bisection_G(-10.0)) < 1e-12
        assert abs(g - lambert_G(-10.0)) < 1e-12
        # leading asymptotics v - 1 + e^{v-1}
        assert g == pytest.approx(-11.0 + math.exp(-11.0), abs=1e-9)

    @pytest.mark.parametrize("v", [-1e-14, -1e-8, -1e-3, -0.3, -0.5, -0.51, -2.0, -25.0, -700.0])
    def test_against_bisection(self, v):
        assert inverse_G(v) == pytest.approx(bisection_G(v), abs=1e-14 * max(1.0, abs(v)))

    def test_against_lambert_w(self):
        vs = -np.geomspace(1e-3, 40, 200)
        ref = np.array([lambert_G(v) for v in vs])
        assert np.abs(inverse_G(vs) - ref).max() < 1e-12

    def test_dense_round_trips(self):
        x = np.linspace(-40.0, 0.0, 100_001)
        assert np.abs(inverse_G(forward_F(x)) - x).max() < 1e-12
        assert np.abs(forward_F(inverse_G(x)) - x).max() < 1e-12

    def test_rejects_positive(self):
        with pytest.raises(DomainError):
            inverse_G(np.array([-1.0, 0.5]))

    def test_rejects_nan(self):
        with pytest.raises(DomainError):
            inverse_G(math.nan)

    def test_warm_start_same_answer(self):
        v = -np.linspace(0.0, 30.0, 1000)
        cold = inverse_G(v)
        warm = inverse_G(v, guess=cold + 1e-3 * np.sin(np.arange(v.size)))
        assert np.abs(cold - warm).max() < 1e-14


@settings(max_examples=300, deadline=None)
@given(a=st.floats(-40, -1e-4), b=st.floats(-40, -1e-4))
def test_monotone_pairs(a, b):
    # F'(u) = 1 - e^u >= 1e-4 here, so distinct inputs stay distinct after rounding
    if abs(a - b) < 1e-9:
        return
    lo, hi = min(a, b), max(a, b)
    assert forward_F(lo) < forward_F(hi)
    assert inverse_G(lo) < inverse_G(hi)


@settings(max_examples=300, deadline=None)
@given(v=st.floats(-1e3, 0.0))
def test_inverse_solves_equation(v):
    u = inverse_G(v)
    assert v - 1.0 <= u <= 0.0
    # residual of F(u) = v relative to the conditioning 1 - e^u
    assert abs(forward_F(u) - v) <= 4e-16 * max(1.0, abs(v)) + 1e-300


@pytest.mark.parametrize("v", [-5e-324, -1e-300, -8.4e-265, -1e-200, -1e-40])
def test_inverse_tiny_arguments(v):
    assert inverse_G(v) == pytest.approx(-math.sqrt(-2 * v), rel=1e-6)


class TestLookup:
    def test_accuracy(self):
        table = GLookup()
        v = -np.geomspace(1e-12, 80.0, 20_000)
        assert np.abs(table(v) - inverse_G(v)).max() < 1e-11

    def test_zero(self):
        assert GLookup()(0.0) == 0.0


class TestNonlinearity:
    def test_cs_peak(self):
        peak = nonlinearity(ModelKind.CHERN_SIMONS, -math.log(3.0))
        assert peak == pytest.approx(4 / 27, rel=1e-15)
        u = np.linspace(-30, 0, 200_001)
        assert nonlinearity("ChernSimons", u).max() <= 4 / 27 + 1e-16
        assert nonlinearity_sup("ChernSimons") == 4 / 27

    @pytest.mark.parametrize("model", list(ModelKind))
    def test_vacuum(self, model):
        assert nonlinearity(model, 0.0) == 0.0

    def test_ah_limit(self):
        assert abs(nonlinearity("AbelianHiggs", -30.0) - 1.0) < 1e-12

    def test_taubes(self):
        assert nonlinearity("Taubes", -1.0) == pytest.approx(1 - math.exp(-1))

    @pytest.mark.parametrize("model", list(ModelKind))
    def test_nonnegative(self, model):
        assert np.all(nonlinearity(model, np.linspace(-50, 0, 1001)) >= 0)

    def test_parse(self):
        assert ModelKind.parse("taubes") is ModelKind.TAUBES
        assert ModelKind.parse("CHERN_SIMONS") is ModelKind.CHERN_SIMONS
        with pytest.raises(ValueError):
            ModelKind.parse("Maxwell")


class TestSlopeBound:
    def test_values(self):
        assert nonlinearity_slope_bound("ChernSimons") == 2
        assert nonlinearity_slope_bound("AbelianHiggs") == 2
        assert nonlinearity_slope_bound("Taubes") == 1

    @pytest.mark.parametrize("model", list(ModelKind))
    def test_bounds_numeric_derivative(self, model):
        # central differences in v through the transform, on u in [-40, -0.01]
        u = np.linspace(-40, -1e-2, 20_001)
        v = forward_F(u) if model.uses_transform else u
        h = 1e-6
        state = inverse_G if model.uses_transform else (lambda x: x)
        dn = (nonlinearity(model, state(v + h)) - nonlinearity(model, state(v - h))) / (2 * h)
        assert np.abs(dn).max() <= nonlinearity_slope_bound(model)
        assert np.abs(dn - nonlinearity_dv(model, u)).max() < 1e-6

    def test_ah_chain_rule(self):
        u = np.linspace(-40, 0, 10_001)
        # 2(e^u - 1)e^u / (1 - e^u) = -2 e^u
        assert np.abs(nonlinearity_dv("AbelianHiggs", u)).max() == pytest.approx(2.0)


class TestEnvelope:
    def test_cs(self):
        u = np.array([-5.0, -math.log(3.0), -0.5, -1e-3])
        env = nonlinearity_envelope("ChernSimons", u)
        assert env[0] == pytest.approx(nonlinearity("ChernSimons", -5.0))
        assert np.all(env[1:] == pytest.approx(4 / 27))

    def test_dominates_future_values(self):
        u = np.linspace(-20, 0, 401)
        env = nonlinearity_envelope("ChernSimons", u)
        for t in np.linspace(-25, 0, 251):
            below = u >= t
            assert np.all(nonlinearity("ChernSimons", t) <= env[below] + 1e-16)
