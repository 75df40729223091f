"""The change of variables v = F(u) = 1 + u - e^u, its inverse and the model nonlinearities.

F maps (-inf, 0] monotonically onto itself, so the quasilinear vortex equations
become semilinear in v.  Everything here is elementwise and accepts scalars or
numpy arrays.
"""
from __future__ import annotations

import enum
import math
from functools import lru_cache

import numpy as np

from .errors import DomainError

__all__ = [
    "ModelKind",
    "forward_F",
    "inverse_G",
    "nonlinearity",
    "nonlinearity_dv",
    "nonlinearity_slope_bound",
    "nonlinearity_sup",
    "GLookup",
]

CS_PEAK_U = -math.log(3.0)
CS_PEAK_VALUE = 4.0 / 27.0

# |u| below this uses the Taylor series of F; u - expm1(u) cancels badly near 0.
_SERIES_CUTOFF = 0.5
_SERIES_TERMS = 22


class ModelKind(str, enum.Enum):
    CHERN_SIMONS = "ChernSimons"
    ABELIAN_HIGGS = "AbelianHiggs"
    TAUBES = "Taubes"

    @property
    def uses_transform(self) -> bool:
        return self is not ModelKind.TAUBES

    @classmethod
    def parse(cls, tag) -> "ModelKind":
        if isinstance(tag, cls):
            return tag
        for kind in cls:
            if str(tag).lower() in (kind.value.lower(), kind.name.lower()):
                return kind
        raise ValueError(f"unknown model {tag!r}; expected one of {[k.value for k in cls]}")


def _check_nonpositive(x, name: str, slack: float = 0.0) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)):
        raise DomainError(f"{name} contains NaN")
    if np.any(arr > slack):
        raise DomainError(f"{name} must be <= 0 (max {float(arr.max()):.3e})")
    return arr


def _F(u: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    small = np.abs(u) < _SERIES_CUTOFF
    big = ~small
    out[big] = u[big] - np.expm1(u[big])
    if small.any():
        us = u[small]
        # -(u^2/2! + u^3/3! + ...) = -u^2 (1/2! + u (1/3! + u (...)))
        acc = np.zeros_like(us)
        for k in range(_SERIES_TERMS, 1, -1):
            acc = acc * us + 1.0 / math.factorial(k)
        out[small] = -acc * us * us
    return out


def forward_F(u):
    """Return F(u) = 1 + u - e^u for u <= 0."""
    arr = _check_nonpositive(u, "u")
    out = _F(np.atleast_1d(arr).astype(float, copy=True))
    return float(out[0]) if np.ndim(u) == 0 else out.reshape(arr.shape)


def inverse_G(v, guess=None, *, tol: float = 4e-16, max_iter: int = 100):
    """Solve F(u) = v for u <= 0 elementwise.

    Safeguarded Newton on h(u) = F(u) - v inside the bracket [v - 1, 0].  A Newton
    iterate that leaves the current bracket, or a vanishing derivative 1 - e^u,
    falls back to bisection.  ``guess`` (same shape as ``v``) warm-starts the
    iteration; values outside the bracket are ignored.
    """
    arr = _check_nonpositive(v, "v")
    scalar = np.ndim(v) == 0
    vv = np.atleast_1d(arr).astype(float).ravel()
    u = np.zeros_like(vv)
    active = vv < 0.0  # G(0) = 0 exactly
    if active.any():
        u[active] = _newton(vv[active], None if guess is None else np.ravel(np.asarray(guess, float))[active],
                            tol, max_iter)
    return float(u[0]) if scalar else u.reshape(arr.shape)


def _newton(v: np.ndarray, guess, tol: float, max_iter: int) -> np.ndarray:
    lo = v - 1.0
    hi = np.zeros_like(v)
    u = np.where(v > -0.5, -np.sqrt(-2.0 * v), v - 1.0)
    if guess is not None:
        ok = (guess > lo) & (guess < hi)
        u = np.where(ok, guess, u)
    todo = np.arange(v.size)
    for _ in range(max_iter):
        uu, vv = u[todo], v[todo]
        h = _F(uu) - vv
        below = h < 0.0
        lo[todo] = np.where(below, np.maximum(lo[todo], uu), lo[todo])
        hi[todo] = np.where(h > 0.0, np.minimum(hi[todo], uu), hi[todo])
        dh = -np.expm1(uu)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(dh > 0.0, h / dh, np.inf)
        new = uu - step
        l, r = lo[todo], hi[todo]
        bad = ~np.isfinite(new) | (new < l) | (new > r)
        new = np.where(bad, 0.5 * (l + r), new)
        change = np.abs(new - uu)
        u[todo] = new
        done = (h == 0.0) | (change <= tol * np.maximum(1.0, np.abs(new))) | (r - l <= tol * np.maximum(1.0, np.abs(l)))
        todo = todo[~done]
        if todo.size == 0:
            break
    return u


def nonlinearity(model, u):
    """Model nonlinearity n(u) >= 0 on u <= 0 (right-hand side density of the reduced equation)."""
    model = ModelKind.parse(model)
    u = np.asarray(u, dtype=float)
    if model is ModelKind.CHERN_SIMONS:
        out = np.exp(u) * np.expm1(u) ** 2
    elif model is ModelKind.ABELIAN_HIGGS:
        out = np.expm1(u) ** 2
    else:
        out = -np.expm1(u)
    return float(out) if out.ndim == 0 else out


def nonlinearity_dv(model, u):
    """d n / d v at the state u, where v = F(u) for transformed models and v = u for Taubes."""
    model = ModelKind.parse(model)
    s = np.exp(np.asarray(u, dtype=float))
    if model is ModelKind.CHERN_SIMONS:
        out = -s * (3.0 * s - 1.0)
    elif model is ModelKind.ABELIAN_HIGGS:
        out = -2.0 * s
    else:
        out = -s
    return float(out) if out.ndim == 0 else out


def nonlinearity_slope_bound(model) -> float:
    """sup |d n(state)/d w| over admissible states, per unit coupling."""
    model = ModelKind.parse(model)
    return 1.0 if model is ModelKind.TAUBES else 2.0


def nonlinearity_sup(model) -> float:
    """sup of n(u) over u <= 0."""
    model = ModelKind.parse(model)
    return CS_PEAK_VALUE if model is ModelKind.CHERN_SIMONS else 1.0


def nonlinearity_envelope(model, u):
    """Pointwise sup of n over (-inf, u].

    Iterates of the monotone scheme only decrease, so this bounds every future
    value of the nonlinearity at a sample.
    """
    model = ModelKind.parse(model)
    u = np.asarray(u, dtype=float)
    if model is ModelKind.CHERN_SIMONS:
        return np.where(u <= CS_PEAK_U, nonlinearity(model, np.minimum(u, CS_PEAK_U)), CS_PEAK_VALUE)
    # n is decreasing in u and tends to 1 at -inf
    return np.ones_like(u)


class GLookup:
    """Cubic Hermite table for G, built on knots uniform in s = sqrt(-2 v).

    G is analytic in s near v = 0 (G ~ -s), which a table uniform in v cannot
    capture.  Inputs below ``v_min`` are passed to the Newton solver.
    """

    def __init__(self, knots: int = 4096, v_min: float = -60.0):
        self.v_min = float(v_min)
        self.s_max = math.sqrt(-2.0 * v_min)
        self.ds = self.s_max / (knots - 1)
        s = np.linspace(0.0, self.s_max, knots)
        u = inverse_G(-0.5 * s * s)
        # du/ds = (du/dv)(dv/ds) = -s / (1 - e^u); limit -1 at s = 0
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(s > 0, -s / -np.expm1(u), -1.0)
        self.u = u
        self.d = d

    def __call__(self, v):
        arr = _check_nonpositive(v, "v")
        flat = np.atleast_1d(arr).astype(float).ravel()
        out = np.empty_like(flat)
        inside = flat >= self.v_min
        s = np.sqrt(-2.0 * flat[inside])
        t = s / self.ds
        i = np.minimum(t.astype(np.int64), self.u.size - 2)
        x = t - i
        u0, u1 = self.u[i], self.u[i + 1]
        d0, d1 = self.d[i] * self.ds, self.d[i + 1] * self.ds
        x2, x3 = x * x, x * x * x
        out[inside] = ((2 * x3 - 3 * x2 + 1) * u0 + (x3 - 2 * x2 + x) * d0
                       + (-2 * x3 + 3 * x2) * u1 + (x3 - x2) * d1)
        if (~inside).any():
            out[~inside] = inverse_G(flat[~inside])
        return float(out[0]) if np.ndim(v) == 0 else out.reshape(arr.shape)


@lru_cache(maxsize=4)
def default_lookup() -> GLookup:
    return GLookup()
