"""Rectangular flat torus, its cell-centred sampling grid and exact spectral linear algebra."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DomainError

__all__ = [
    "TorusDomain",
    "GridSpec",
    "ScalarField",
    "VortexConfiguration",
    "SpectralOps",
    "spectral_ops",
    "integrate",
    "laplacian",
    "helmholtz_solve",
    "poisson_solve",
    "gradient",
    "gradient_squared",
]


@dataclass(frozen=True)
class TorusDomain:
    L1: float = 2 * math.pi
    L2: float = 2 * math.pi

    def __post_init__(self):
        for name in ("L1", "L2"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
                raise ConfigurationError(f"{name} must be a positive finite number, got {val!r}")
            object.__setattr__(self, name, float(val))

    @property
    def area(self) -> float:
        return self.L1 * self.L2

    def wrap(self, x: float, y: float) -> tuple[float, float]:
        return x % self.L1, y % self.L2


@dataclass(frozen=True)
class GridSpec:
    n1: int = 256
    n2: int = 256
    offset: bool = True

    def __post_init__(self):
        for name in ("n1", "n2"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or n < 16 or n % 2:
                raise ConfigurationError(f"{name} must be an even integer >= 16, got {n!r}")
            if n & (n - 1):
                raise ConfigurationError(f"{name} must be a power of two, got {n}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    def spacing(self, domain: TorusDomain) -> tuple[float, float]:
        return domain.L1 / self.n1, domain.L2 / self.n2

    def axes(self, domain: TorusDomain) -> tuple[np.ndarray, np.ndarray]:
        h1, h2 = self.spacing(domain)
        s = 0.5 if self.offset else 0.0
        return (np.arange(self.n1) + s) * h1, (np.arange(self.n2) + s) * h2

    def coordinates(self, domain: TorusDomain) -> tuple[np.ndarray, np.ndarray]:
        """Sample coordinates as two (n1, n2) arrays, first index along x."""
        x, y = self.axes(domain)
        return np.meshgrid(x, y, indexing="ij")

    def node_distance(self, domain: TorusDomain, x: float, y: float) -> float:
        """Distance from (x, y) to the nearest sample node."""
        h1, h2 = self.spacing(domain)
        s = 0.5 if self.offset else 0.0
        fx = (x / h1 - s) % 1.0
        fy = (y / h2 - s) % 1.0
        dx = min(fx, 1.0 - fx) * h1
        dy = min(fy, 1.0 - fy) * h2
        return math.hypot(dx, dy)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real samples of a function on the torus grid.  Immutable."""

    values: np.ndarray
    domain: TorusDomain
    grid: GridSpec

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ConfigurationError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise DomainError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, domain: TorusDomain, grid: GridSpec, fn) -> "ScalarField":
        X, Y = grid.coordinates(domain)
        return cls(fn(X, Y), domain, grid)

    @classmethod
    def constant(cls, domain: TorusDomain, grid: GridSpec, c: float) -> "ScalarField":
        return cls(np.full(grid.shape, float(c)), domain, grid)

    def like(self, values) -> "ScalarField":
        return ScalarField(values, self.domain, self.grid)

    def _coerce(self, other):
        if isinstance(other, ScalarField):
            if other.domain != self.domain or other.grid != self.grid:
                raise ConfigurationError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return self.like(self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.like(self.values - self._coerce(other))

    def __rsub__(self, other):
        return self.like(self._coerce(other) - self.values)

    def __mul__(self, other):
        return self.like(self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return self.like(-self.values)

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True)
class VortexConfiguration:
    """Vortex points p_j with positive integer multiplicities n_j.

    Points are wrapped into the fundamental cell of ``domain`` when one is given,
    and repeated coordinates are merged by adding their multiplicities.
    """

    points: tuple[tuple[float, float], ...]
    multiplicities: tuple[int, ...]

    def __post_init__(self):
        pts = [tuple(float(c) for c in p) for p in self.points]
        mults = list(self.multiplicities)
        if len(pts) != len(mults):
            raise ConfigurationError("points and multiplicities differ in length")
        if not pts:
            raise ConfigurationError("at least one vortex is required (N >= 1)")
        merged: dict[tuple[float, float], int] = {}
        for p, n in zip(pts, mults):
            if len(p) != 2 or not all(math.isfinite(c) for c in p):
                raise ConfigurationError(f"vortex point {p!r} is not a finite (x, y) pair")
            if isinstance(n, bool) or int(n) != n or n < 1:
                raise ConfigurationError(f"multiplicity {n!r} at {p} must be a positive integer")
            merged[p] = merged.get(p, 0) + int(n)
        object.__setattr__(self, "points", tuple(merged))
        object.__setattr__(self, "multiplicities", tuple(merged.values()))

    @classmethod
    def create(cls, domain: TorusDomain, points: Sequence, multiplicities: Sequence[int] | None = None):
        if multiplicities is None:
            multiplicities = [1] * len(points)
        wrapped = []
        for p in points:
            if len(p) != 2:
                raise ConfigurationError(f"vortex point {p!r} is not an (x, y) pair")
            wrapped.append(domain.wrap(float(p[0]), float(p[1])))
        return cls(tuple(wrapped), tuple(multiplicities))

    @property
    def N(self) -> int:
        return sum(self.multiplicities)

    def check_inside(self, domain: TorusDomain) -> None:
        for x, y in self.points:
            if not (0.0 <= x < domain.L1 and 0.0 <= y < domain.L2):
                raise ConfigurationError(f"vortex point ({x}, {y}) lies outside the fundamental cell")

    def check_grid(self, domain: TorusDomain, grid: GridSpec) -> None:
        h1, h2 = grid.spacing(domain)
        limit = 1e-9 * min(h1, h2)
        for x, y in self.points:
            d = grid.node_distance(domain, x, y)
            if d < limit:
                raise ConfigurationError(
                    f"vortex point ({x}, {y}) is {d:.3e} from a grid sample (limit {limit:.3e})"
                )

    def dominated_by(self, other: "VortexConfiguration") -> bool:
        """True when ``other`` has the same points with multiplicities >= ours."""
        mine = dict(zip(self.points, self.multiplicities))
        theirs = dict(zip(other.points, other.multiplicities))
        return all(theirs.get(p, 0) >= n for p, n in mine.items())

    def as_dict(self) -> dict:
        return {
            "points": [list(p) for p in self.points],
            "multiplicities": list(self.multiplicities),
        }


class SpectralOps:
    """Wavenumber tables for real-to-complex transforms on one grid.

    Laplacian and Helmholtz symbols keep the Nyquist modes; first derivatives
    zero them so that differentiation stays skew-symmetric on real data.
    """

    def __init__(self, domain: TorusDomain, grid: GridSpec):
        self.domain = domain
        self.grid = grid
        h1, h2 = grid.spacing(domain)
        k1 = 2 * np.pi * np.fft.fftfreq(grid.n1, d=h1)
        k2 = 2 * np.pi * np.fft.rfftfreq(grid.n2, d=h2)
        self.k1 = k1[:, None]
        self.k2 = k2[None, :]
        self.ksq = self.k1 ** 2 + self.k2 ** 2
        d1 = k1.copy()
        d1[grid.n1 // 2] = 0.0
        d2 = k2.copy()
        d2[-1] = 0.0
        self.ik1 = 1j * d1[:, None]
        self.ik2 = 1j * d2[None, :]
        self.shape = grid.shape

    def fwd(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfft2(f)

    def inv(self, fh: np.ndarray) -> np.ndarray:
        return np.fft.irfft2(fh, s=self.shape)

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.inv(-self.ksq * self.fwd(f))

    def helmholtz(self, rhs: np.ndarray, K: float) -> np.ndarray:
        return self.inv(self.fwd(rhs) / (-self.ksq - K))

    def poisson(self, rhs: np.ndarray) -> np.ndarray:
        """Mean-zero solution of Δw = rhs - mean(rhs)."""
        fh = self.fwd(rhs)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = fh / -self.ksq
        out[0, 0] = 0.0
        return self.inv(out)

    def gradient(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        fh = self.fwd(f)
        return self.inv(self.ik1 * fh), self.inv(self.ik2 * fh)


@lru_cache(maxsize=16)
def spectral_ops(domain: TorusDomain, grid: GridSpec) -> SpectralOps:
    return SpectralOps(domain, grid)


def _ops(f: ScalarField) -> SpectralOps:
    return spectral_ops(f.domain, f.grid)


def integrate(f: ScalarField) -> float:
    """Uniform-weight quadrature, area times the sample mean."""
    return float(f.values.mean() * f.domain.area)


def laplacian(f: ScalarField) -> ScalarField:
    return f.like(_ops(f).laplacian(f.values))


def helmholtz_solve(rhs: ScalarField, K: float) -> ScalarField:
    """Return the unique w with (Δ - K) w = rhs, K > 0."""
    if not K > 0:
        raise DomainError(f"Helmholtz shift K must be positive, got {K!r}")
    return rhs.like(_ops(rhs).helmholtz(rhs.values, float(K)))


def poisson_solve(rhs: ScalarField) -> ScalarField:
    return rhs.like(_ops(rhs).poisson(rhs.values))


def gradient(f: ScalarField) -> tuple[ScalarField, ScalarField]:
    gx, gy = _ops(f).gradient(f.values)
    return f.like(gx), f.like(gy)


def gradient_squared(f: ScalarField) -> ScalarField:
    gx, gy = _ops(f).gradient(f.values)
    return f.like(gx * gx + gy * gy)
