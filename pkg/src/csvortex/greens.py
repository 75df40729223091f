"""Torus Green's function in Jacobi theta form and the singular vortex background v0.

G(x; p) solves ΔG = δ_p - 1/|Ω| on the rectangular torus with zero cell mean.
The background is v0 = 4π Σ n_j G(x; p_j) shifted to zero sample mean, so

    Δv0 = -4πN/|Ω| + 4π Σ n_j δ_{p_j},   v0 ~ 2 n_j ln|x - p_j|  near p_j.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate as sp_integrate
from scipy.special import j0, j1, k0

from .domain import GridSpec, ScalarField, TorusDomain, VortexConfiguration, spectral_ops
from .errors import ConfigurationError, SingularityError

__all__ = [
    "BackgroundField",
    "build_background",
    "greens_theta",
    "greens_values",
    "greens_gradient",
    "greens_mean_constant",
    "spectral_background",
    "subtracted_background",
    "crosscheck_spectral",
    "laplacian_defect",
    "screened_greens",
    "LogCutoff",
    "greens_mean_by_quadrature",
]

_SERIES_EPS = 1e-16
_MAX_TERMS = 64
# K0(45) ~ 1e-21: images farther than this (in units of 1/√K) are dropped
_K0_NEGLIGIBLE = 45.0
_IMAGE_SUM_MIN = 6.0


def _canonical(domain: TorusDomain):
    """Period lengths ordered so that the theta nome q = exp(-π L2/L1) is at most exp(-π)."""
    if domain.L2 >= domain.L1:
        return domain.L1, domain.L2, False
    return domain.L2, domain.L1, True


@lru_cache(maxsize=64)
def _theta_coefficients(tau_im: float) -> np.ndarray:
    q = math.exp(-math.pi * tau_im)
    coeffs = []
    for m in range(_MAX_TERMS):
        c = 2.0 * (-1) ** m * q ** ((m + 0.5) ** 2)
        # terms carry a factor up to exp((2m+1) π tau_im / 2) after cell reduction
        size = abs(c) * math.exp((2 * m + 1) * math.pi * tau_im / 2.0)
        if m > 0 and size < _SERIES_EPS * abs(coeffs[0]):
            break
        coeffs.append(c)
    return np.array(coeffs)


@lru_cache(maxsize=64)
def greens_mean_constant(domain: TorusDomain) -> float:
    """Constant making the cell mean of G vanish.

    Averaging the product form of θ1 over the reduced cell gives
    mean ln|θ1| = Σ_{m>=1} ln(1 - q^{2m}); the quadratic term averages to -L2/(24 L1).
    """
    a, b, _ = _canonical(domain)
    tau_im = b / a
    q = math.exp(-math.pi * tau_im)
    s = 0.0
    m = 1
    while True:
        term = math.log1p(-(q ** (2 * m)))
        s += term
        if abs(term) < 1e-18:
            break
        m += 1
    return -(s / (2.0 * math.pi) - tau_im / 24.0)


def _reduce(dx, dy, a: float, b: float):
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    return (dx + a / 2) % a - a / 2, (dy + b / 2) % b - b / 2


def _theta_parts(domain: TorusDomain, dx, dy):
    a, b, swapped = _canonical(domain)
    if swapped:
        dx, dy = dy, dx
    rx, ry = _reduce(dx, dy, a, b)
    zeta = np.pi * (rx + 1j * ry) / a
    coeffs = _theta_coefficients(b / a)
    theta = np.zeros(zeta.shape, dtype=complex)
    dtheta = np.zeros(zeta.shape, dtype=complex)
    for m, c in enumerate(coeffs):
        k = 2 * m + 1
        theta += c * np.sin(k * zeta)
        dtheta += c * k * np.cos(k * zeta)
    return a, b, swapped, rx, ry, theta, dtheta


def greens_values(domain: TorusDomain, dx, dy, *, constant: float | None = None) -> np.ndarray:
    """G at displacement (dx, dy) = x - p, vectorised.  Zero displacement gives -inf."""
    a, b, _, rx, ry, theta, _ = _theta_parts(domain, dx, dy)
    c = greens_mean_constant(domain) if constant is None else constant
    with np.errstate(divide="ignore"):
        return np.log(np.abs(theta)) / (2 * np.pi) - ry ** 2 / (2 * a * b) + c


def greens_gradient(domain: TorusDomain, dx, dy) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of G with respect to x at displacement (dx, dy)."""
    a, b, swapped, rx, ry, theta, dtheta = _theta_parts(domain, dx, dy)
    with np.errstate(divide="ignore", invalid="ignore"):
        logd = (np.pi / a) * dtheta / theta
    gx = logd.real / (2 * np.pi)
    gy = -logd.imag / (2 * np.pi) - ry / (a * b)
    if swapped:
        gx, gy = gy, gx
    return gx, gy


def greens_theta(domain: TorusDomain, x, p) -> float:
    """Torus Green's function G(x; p) with ΔG = δ_p - 1/|Ω| and zero cell mean."""
    dx = float(x[0]) - float(p[0])
    dy = float(x[1]) - float(p[1])
    rx, ry = _reduce(dx, dy, domain.L1, domain.L2)
    if math.hypot(float(rx), float(ry)) <= 1e-12 * min(domain.L1, domain.L2):
        raise SingularityError(f"G(x; p) evaluated at its singularity x = p = {tuple(p)}")
    return float(greens_values(domain, dx, dy))


@dataclass(frozen=True, eq=False)
class BackgroundField:
    v0: ScalarField
    grad_x: ScalarField
    grad_y: ScalarField
    config: VortexConfiguration

    @property
    def domain(self) -> TorusDomain:
        return self.v0.domain

    @property
    def grid(self) -> GridSpec:
        return self.v0.grid

    @property
    def N(self) -> int:
        return self.config.N

    @property
    def source(self) -> float:
        """The constant 4πN/|Ω| of the reduced equations."""
        return 4 * math.pi * self.config.N / self.domain.area

    def distance_to_vortices(self) -> np.ndarray:
        """Sample-wise torus distance to the nearest vortex point."""
        X, Y = self.grid.coordinates(self.domain)
        L1, L2 = self.domain.L1, self.domain.L2
        best = np.full(self.grid.shape, np.inf)
        for px, py in self.config.points:
            rx, ry = _reduce(X - px, Y - py, L1, L2)
            best = np.minimum(best, np.hypot(rx, ry))
        return best


def build_background(domain: TorusDomain, grid: GridSpec, config: VortexConfiguration,
                     *, constant_offset: float = 0.0) -> BackgroundField:
    """Sample v0 and its analytic gradient on the grid.

    ``constant_offset`` perturbs the Green's function constant and exists only
    as a fault-injection hook for validation tooling.
    """
    config.check_inside(domain)
    config.check_grid(domain, grid)
    X, Y = grid.coordinates(domain)
    c = greens_mean_constant(domain)
    v0 = np.zeros(grid.shape)
    gx = np.zeros(grid.shape)
    gy = np.zeros(grid.shape)
    for (px, py), n in zip(config.points, config.multiplicities):
        v0 += 4 * np.pi * n * greens_values(domain, X - px, Y - py, constant=c)
        ax, ay = greens_gradient(domain, X - px, Y - py)
        gx += 4 * np.pi * n * ax
        gy += 4 * np.pi * n * ay
    # quadrature gauge: the analytic mean differs from the sample mean by aliasing only
    v0 -= v0.mean()
    v0 += 4 * np.pi * config.N * constant_offset
    return BackgroundField(
        ScalarField(v0, domain, grid), ScalarField(gx, domain, grid), ScalarField(gy, domain, grid), config
    )


def spectral_background(domain: TorusDomain, grid: GridSpec, config: VortexConfiguration) -> ScalarField:
    """v0 by truncated Fourier synthesis: mode k != 0 gets -4π Σ n_j e^{-ik·p_j} / (|Ω| |k|²)."""
    ops = spectral_ops(domain, grid)
    x, y = grid.axes(domain)
    k1 = ops.k1
    k2 = ops.k2
    # full complex spectrum, symmetric truncation: drop Nyquist rows/cols to keep the field real
    coef = np.zeros((grid.n1, grid.n2 // 2 + 1), dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = -4 * np.pi / (domain.area * ops.ksq)
    inv[0, 0] = 0.0
    inv[grid.n1 // 2, :] = 0.0
    inv[:, -1] = 0.0
    for (px, py), n in zip(config.points, config.multiplicities):
        coef += n * np.exp(-1j * (k1 * px + k2 * py))
    coef *= inv
    # samples sit at x0 + i h; fold the origin shift into the phase
    coef *= np.exp(1j * (k1 * x[0] + k2 * y[0]))
    # irfft2 supplies the conjugate half and divides by n1 n2
    return ScalarField(np.fft.irfft2(coef * (grid.n1 * grid.n2), s=grid.shape), domain, grid)


def subtracted_background(domain: TorusDomain, grid: GridSpec, config: VortexConfiguration,
                          cutoff: "LogCutoff | None" = None) -> ScalarField:
    """v0 by Fourier synthesis of the smooth remainder G - s, with s a cut-off logarithm.

    The plane Fourier transform of s is known, so the remainder's coefficients are
    exact up to the Legendre quadrature in the transition annulus; s is then added
    back pointwise.  Converges spectrally, unlike plain truncation.
    """
    ops = spectral_ops(domain, grid)
    cut = cutoff or default_cutoff(domain)
    kmag = np.sqrt(ops.ksq)
    uniq, inverse = np.unique(kmag, return_inverse=True)
    s_hat = np.zeros_like(uniq)
    s_hat[1:] = cut.hankel(uniq[1:])
    s_hat = s_hat[inverse].reshape(kmag.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        mult = -4 * np.pi / (domain.area * ops.ksq) - 4 * np.pi * s_hat / domain.area
    mult[0, 0] = 0.0
    mult[grid.n1 // 2, :] = 0.0
    mult[:, -1] = 0.0
    x, y = grid.axes(domain)
    X, Y = grid.coordinates(domain)
    shift = np.exp(1j * (ops.k1 * x[0] + ops.k2 * y[0]))
    out = np.zeros(grid.shape)
    for (px, py), n in zip(config.points, config.multiplicities):
        coef = mult * np.exp(-1j * (ops.k1 * px + ops.k2 * py)) * shift
        rx, ry = _reduce(X - px, Y - py, domain.L1, domain.L2)
        out += n * (np.fft.irfft2(coef * (grid.n1 * grid.n2), s=grid.shape)
                    + 4 * np.pi * cut.values(np.hypot(rx, ry)))
    return ScalarField(out - out.mean(), domain, grid)


def crosscheck_spectral(background: BackgroundField, *, exclusion_cells: float = 4.0,
                        method: str = "subtracted") -> float:
    """Max |theta-form v0 - Fourier-synthesis v0| over samples away from all vortices.

    ``method="plain"`` uses bare truncation of -4π Σ n_j e^{-ik·p_j}/(|Ω||k|²).  Its
    error near the singularity is O(h)-wide Gibbs ringing that does not shrink at a
    fixed number of cells from the vortex, so the default subtracts a cut-off
    logarithm first (see ``subtracted_background``).
    """
    if method == "plain":
        spec = spectral_background(background.domain, background.grid, background.config)
    elif method == "subtracted":
        spec = subtracted_background(background.domain, background.grid, background.config)
    else:
        raise ConfigurationError(f"unknown cross-check method {method!r}")
    h = min(background.grid.spacing(background.domain))
    mask = background.distance_to_vortices() > exclusion_cells * h
    diff = np.abs(background.v0.values - spec.values)
    return float(diff[mask].max())


def laplacian_defect(background: BackgroundField, *, exclusion_cells: float = 1.5) -> float:
    """max |Δ_h v0 + 4πN/|Ω|| / (4πN) away from the vortices.

    The normalisation makes this the defect of ΔG = -1/|Ω| for a single vortex.
    Each vortex's cut-off logarithm is removed before the spectral Laplacian and
    its regular Laplacian added back analytically.
    """
    dom, grid = background.domain, background.grid
    ops = spectral_ops(dom, grid)
    cut = default_cutoff(dom)
    X, Y = grid.coordinates(dom)
    rest = background.v0.values.copy()
    lap_s = np.zeros(grid.shape)
    for (px, py), n in zip(background.config.points, background.config.multiplicities):
        rx, ry = _reduce(X - px, Y - py, dom.L1, dom.L2)
        r = np.hypot(rx, ry)
        rest -= 4 * np.pi * n * cut.values(r)
        lap_s += 4 * np.pi * n * cut.laplacian(r)
    lap = ops.laplacian(rest) + lap_s
    h = min(grid.spacing(dom))
    mask = background.distance_to_vortices() > exclusion_cells * h
    return float(np.abs(lap + background.source)[mask].max()) / (4 * np.pi * background.N)


def screened_greens(domain: TorusDomain, grid: GridSpec, p, K: float) -> np.ndarray:
    """Samples of H with (K - Δ)H = δ_p on the torus, K > 0.

    For K large against the cell the periodised K0(√K r)/(2π) image sum is used
    directly.  Otherwise H = D - G where D = H + G has the smooth spectrum
    1/(K|Ω|) at k = 0 and -K/(|Ω||k|²(K + |k|²)) elsewhere.
    """
    if not K > 0:
        raise ConfigurationError(f"screening constant must be positive, got {K!r}")
    X, Y = grid.coordinates(domain)
    rx, ry = _reduce(X - p[0], Y - p[1], domain.L1, domain.L2)
    root = math.sqrt(K)
    span = min(domain.L1, domain.L2)
    if root * span >= _IMAGE_SUM_MIN:
        reach = _K0_NEGLIGIBLE / root
        m1 = int(reach / domain.L1) + 1
        m2 = int(reach / domain.L2) + 1
        out = np.zeros(grid.shape)
        for a in range(-m1, m1 + 1):
            for b in range(-m2, m2 + 1):
                r = np.hypot(rx + a * domain.L1, ry + b * domain.L2)
                if root * r.min() < _K0_NEGLIGIBLE:
                    out += k0(root * r)
        return out / (2 * np.pi)
    ops = spectral_ops(domain, grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        mult = -K / (domain.area * ops.ksq * (K + ops.ksq))
    mult[0, 0] = 1.0 / (K * domain.area)
    x, y = grid.axes(domain)
    coef = mult * np.exp(-1j * (ops.k1 * (p[0] - x[0]) + ops.k2 * (p[1] - y[0])))
    D = np.fft.irfft2(coef * (grid.n1 * grid.n2), s=grid.shape)
    return D - greens_values(domain, X - p[0], Y - p[1])


class LogCutoff:
    """s(x) = χ(|x - p|) ln|x - p| / (2π) with a C-infinity radial cutoff χ.

    χ = 1 for r <= r_in and 0 for r >= r_out.  G - s is smooth and periodic,
    so spectral operations on it converge fast; Δs and ∫s are known in closed form.
    """

    def __init__(self, r_in: float, r_out: float):
        if not 0 < r_in < r_out:
            raise ConfigurationError("cutoff radii must satisfy 0 < r_in < r_out")
        self.r_in = r_in
        self.r_out = r_out

    @staticmethod
    def _phi(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        pos = t > 0
        tp = t[pos]
        e = np.exp(-1.0 / tp)
        out[pos] = e
        d1 = np.zeros_like(t)
        d2 = np.zeros_like(t)
        d1[pos] = e / tp ** 2
        d2[pos] = e * (1.0 / tp ** 4 - 2.0 / tp ** 3)
        return out, d1, d2

    def chi(self, r):
        """χ and its first two radial derivatives."""
        w = self.r_out - self.r_in
        t = (self.r_out - np.asarray(r, dtype=float)) / w
        t = np.clip(t, 0.0, 1.0)
        A, A1, A2 = self._phi(t)
        B, B1, B2 = self._phi(1.0 - t)
        B1 = -B1
        S = A + B
        num = A1 * B - A * B1
        num1 = A2 * B - A * B2
        S1 = A1 + B1
        psi = A / S
        dpsi = num / S ** 2
        d2psi = (num1 * S - 2 * num * S1) / S ** 3
        # dt/dr = -1/w
        return psi, -dpsi / w, d2psi / w ** 2

    def values(self, r):
        r = np.asarray(r, dtype=float)
        c, _, _ = self.chi(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r > 0, c * np.log(r) / (2 * np.pi), -np.inf)

    def laplacian(self, r):
        """Regular part of Δs (the point mass at r = 0 omitted)."""
        r = np.asarray(r, dtype=float)
        _, c1, c2 = self.chi(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            lr = np.log(r)
            out = (c2 * lr + c1 * (lr + 2.0) / r) / (2 * np.pi)
        return np.where(r > self.r_in, out, 0.0)

    def hankel(self, k, nodes: int = 2048):
        """Plane Fourier transform ∫ s(x) e^{-ik·x} dx at radial wavenumbers k > 0.

        The inner disc is done in closed form; the annulus by Gauss-Legendre.
        """
        k = np.asarray(k, dtype=float)
        a, b = self.r_in, self.r_out
        inner = a * math.log(a) * j1(k * a) / k - (1.0 - j0(k * a)) / k ** 2
        x, wts = leggauss(nodes)
        r = 0.5 * (b - a) * x + 0.5 * (b + a)
        wts = wts * 0.5 * (b - a) * self.chi(r)[0] * np.log(r) * r
        outer = np.empty_like(k)
        for start in range(0, k.size, 512):
            chunk = k[start:start + 512]
            outer[start:start + 512] = j0(np.outer(chunk, r)) @ wts
        return inner + outer

    def integral(self) -> float:
        """∫ s dx over the plane (support is a disc)."""
        inner = 0.5 * self.r_in ** 2 * math.log(self.r_in) - 0.25 * self.r_in ** 2

        def f(r):
            return float(self.chi(r)[0]) * math.log(r) * r

        outer, _ = sp_integrate.quad(f, self.r_in, self.r_out, epsabs=1e-14, epsrel=1e-13, limit=200)
        return inner + outer


def default_cutoff(domain: TorusDomain) -> LogCutoff:
    r_out = 0.45 * min(domain.L1, domain.L2)
    return LogCutoff(r_out / 3, r_out)


def greens_mean_by_quadrature(domain: TorusDomain, grid: GridSpec, p=(0.0, 0.0)) -> float:
    """Cell mean of the unnormalised theta form, by singularity-subtracted quadrature.

    Independent of the product-formula constant; used to cross-check it.
    """
    X, Y = grid.coordinates(domain)
    rx, ry = _reduce(X - p[0], Y - p[1], domain.L1, domain.L2)
    r = np.hypot(rx, ry)
    cut = default_cutoff(domain)
    raw = greens_values(domain, X - p[0], Y - p[1], constant=0.0)
    smooth = raw - cut.values(r)
    return float((smooth.mean() * domain.area + cut.integral()) / domain.area)
