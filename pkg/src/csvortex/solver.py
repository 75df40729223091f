"""Monotone iteration for the reduced vortex equations and its subsolution certificate.

All three models share the reduced form

    Δw + λ n(state) - 4πN/|Ω| = 0,   state = G(v0 + w)  (Chern-Simons, Abelian Higgs)
                                     state = v0 + w     (Taubes)

The scheme starts from the supersolution w0 = -v0 and solves

    (Δ - K) w_k = -λ n(state_{k-1}) - K w_{k-1} + 4πN/|Ω|

with K > λ sup|dn/dw|, which makes the iterates decrease pointwise.  They either
converge to the maximal solution or descend without bound.
"""
from __future__ import annotations

import collections
import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .domain import ScalarField, spectral_ops
from .errors import ConfigurationError, ContractError, DomainError
from .greens import BackgroundField, _reduce, greens_values, screened_greens
from .transform import (
    ModelKind,
    default_lookup,
    inverse_G,
    nonlinearity,
    nonlinearity_envelope,
    nonlinearity_slope_bound,
    nonlinearity_sup,
)

__all__ = [
    "Status",
    "SolveConfig",
    "SolveOutcome",
    "SubsolutionCertificate",
    "monotone_solve",
    "residual",
    "first_iterate",
    "state_from",
    "build_subsolution",
    "verify_maximality",
]

log = logging.getLogger(__name__)

# slack allowed on v0 + w > 0 before the transform refuses the input
STATE_SLACK = 1e-12
MONOTONE_TOL = 1e-12
MONOTONE_ABORT = 1e-9


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    DIVERGED = "Diverged"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class SolveConfig:
    lam: float
    K_factor: float = 3.0
    tol_iter: float = 1e-10
    tol_residual: float = 1e-8
    max_iters: int = 100_000
    divergence_floor: float = -1e3
    stall_window: int = 50
    snapshot_every: int = 0
    descent_certificate: bool = True
    use_lookup: bool = False
    dealias: bool = False
    exact_first_step: bool = True
    bound_check: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ConfigurationError(f"coupling lambda must be positive, got {self.lam!r}")
        for name in ("tol_iter", "tol_residual"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if int(self.max_iters) < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if int(self.stall_window) < 2:
            raise ConfigurationError("stall_window must be >= 2")

    @property
    def K(self) -> float:
        return self.K_factor * self.lam

    def validate_for(self, model: ModelKind) -> None:
        bound = nonlinearity_slope_bound(model)
        if not self.K_factor > bound:
            raise ConfigurationError(
                f"K_factor={self.K_factor} must exceed {bound} for {model.value} (K > {bound} lambda)"
            )

    def with_lambda(self, lam: float) -> "SolveConfig":
        return _replace(self, lam=float(lam))


def _replace(cfg, **changes):
    from dataclasses import replace

    return replace(cfg, **changes)


@dataclass(eq=False)
class SolveOutcome:
    status: Status
    model: ModelKind
    lam: float
    w: ScalarField
    iterations: int
    step_history: list[float]
    residual: float
    quantization_error: float | None
    max_violation: float
    reason: str = ""
    snapshots: list[tuple[int, np.ndarray]] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    def summary(self) -> dict:
        return {
            "status": self.status.value,
            "reason": self.reason,
            "lambda": self.lam,
            "iterations": self.iterations,
            "residual": self.residual,
            "quantization_error": self.quantization_error,
            "max_monotonicity_violation": self.max_violation,
            "final_step": self.step_history[-1] if self.step_history else None,
            "min_w": self.w.min(),
            **{k: v for k, v in self.diagnostics.items() if isinstance(v, (int, float, str))},
        }


class _Nonlinear:
    """Evaluates state and n(state) on collocation points, optionally on a 3/2-padded grid."""

    def __init__(self, model: ModelKind, background: BackgroundField, cfg: SolveConfig):
        self.model = model
        self.v0 = background.v0.values
        self.ops = spectral_ops(background.domain, background.grid)
        self.lookup = default_lookup() if cfg.use_lookup else None
        self.guess = None
        self.dealias = cfg.dealias
        if self.dealias:
            self._setup_padding(background)

    def _setup_padding(self, background: BackgroundField) -> None:
        dom, grid = background.domain, background.grid
        m1, m2 = 3 * grid.n1 // 2, 3 * grid.n2 // 2
        h1, h2 = dom.L1 / m1, dom.L2 / m2
        x = (np.arange(m1) + 0.5) * h1
        y = (np.arange(m2) + 0.5) * h2
        X, Y = np.meshgrid(x, y, indexing="ij")
        v0 = np.zeros((m1, m2))
        for (px, py), n in zip(background.config.points, background.config.multiplicities):
            rx, ry = _reduce(X - px, Y - py, dom.L1, dom.L2)
            if np.hypot(rx, ry).min() < 1e-9 * min(h1, h2):
                raise ConfigurationError(f"vortex point ({px}, {py}) falls on a padded-grid sample")
            v0 += 4 * np.pi * n * greens_values(dom, X - px, Y - py)
        # same gauge as the coarse field: match the zero mode
        v0 += background.v0.values.mean() - v0.mean()
        self.pad_shape = (m1, m2)
        self.v0_pad = v0

    def _to_fine(self, f: np.ndarray) -> np.ndarray:
        n1, n2 = f.shape
        m1, m2 = self.pad_shape
        fh = np.fft.rfft2(f)
        out = np.zeros((m1, m2 // 2 + 1), dtype=complex)
        h = n1 // 2
        out[:h, : n2 // 2] = fh[:h, : n2 // 2]
        out[-h + 1:, : n2 // 2] = fh[-h + 1:, : n2 // 2]
        # cell-centred samples: the grids share the cell, shift phases to the fine origin
        k1 = np.fft.fftfreq(m1, d=1.0 / m1)[:, None]
        k2 = np.fft.rfftfreq(m2, d=1.0 / m2)[None, :]
        shift = np.exp(2j * np.pi * (k1 * (0.5 / m1 - 0.5 / n1) + k2 * (0.5 / m2 - 0.5 / n2)))
        out *= shift
        return np.fft.irfft2(out, s=(m1, m2)) * (m1 * m2) / (n1 * n2)

    def _to_coarse(self, g: np.ndarray, shape) -> np.ndarray:
        n1, n2 = shape
        m1, m2 = g.shape
        gh = np.fft.rfft2(g)
        out = np.zeros((n1, n2 // 2 + 1), dtype=complex)
        h = n1 // 2
        out[:h, : n2 // 2] = gh[:h, : n2 // 2]
        out[-h + 1:, : n2 // 2] = gh[-h + 1:, : n2 // 2]
        k1 = np.fft.fftfreq(n1, d=1.0 / n1)[:, None]
        k2 = np.fft.rfftfreq(n2, d=1.0 / n2)[None, :]
        shift = np.exp(2j * np.pi * (k1 * (0.5 / n1 - 0.5 / m1) + k2 * (0.5 / n2 - 0.5 / m2)))
        out *= shift
        return np.fft.irfft2(out, s=(n1, n2)) * (n1 * n2) / (m1 * m2)

    def state(self, v: np.ndarray) -> np.ndarray:
        if not self.model.uses_transform:
            return v
        if self.lookup is not None:
            return self.lookup(v)
        u = inverse_G(v, self.guess)
        self.guess = u
        return u

    def evaluate(self, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (state on the coarse grid, n(state) as used by the scheme)."""
        v = _clip_state(self.v0 + w)
        u = self.state(v)
        if not self.dealias:
            return u, nonlinearity(self.model, u)
        # the start w0 = -v0 is singular and its interpolant rings; admissibility is
        # enforced on the collocation grid, the padded samples are only clipped
        vf = np.minimum(self.v0_pad + self._to_fine(w), 0.0)
        uf = inverse_G(vf) if self.model.uses_transform else vf
        return u, self._to_coarse(nonlinearity(self.model, uf), w.shape)


def _clip_state(v: np.ndarray) -> np.ndarray:
    top = float(v.max())
    if top > STATE_SLACK:
        raise ContractError(f"state v0 + w = {top:.3e} exceeds 0; iterate left the admissible set",
                            {"max_state": top})
    return np.minimum(v, 0.0)


def state_from(model, background: BackgroundField, w: ScalarField) -> ScalarField:
    """The physical variable u = ln|φ|² carried by w."""
    model = ModelKind.parse(model)
    v = _clip_state(background.v0.values + w.values)
    u = inverse_G(v) if model.uses_transform else v
    return w.like(u)


def residual(model, background: BackgroundField, w: ScalarField, lam: float) -> float:
    """‖Δ_h w + λ n(state) - 4πN/|Ω|‖_∞ over all samples."""
    model = ModelKind.parse(model)
    u = state_from(model, background, w).values
    ops = spectral_ops(background.domain, background.grid)
    r = ops.laplacian(w.values) + lam * nonlinearity(model, u) - background.source
    return float(np.abs(r).max())


def monotone_solve(model, background: BackgroundField, cfg: SolveConfig,
                   initial: ScalarField | None = None) -> SolveOutcome:
    """Run the monotone scheme from w0 = -v0 and classify the outcome.

    ``initial`` replaces the start by another supersolution, typically the
    maximal solution at a larger coupling.  Such a start still descends to the
    maximal solution; a start that is not a supersolution trips the
    monotonicity contract.

    Converged: the sup-norm step fell below ``tol_iter`` and the residual below
    ``tol_residual``.  Diverged: min(w) crossed ``divergence_floor``, the steps
    grew over ``stall_window`` iterations while min(w) fell, or the descent
    certificate fired.  The certificate uses the pointwise envelope
    n*(x) = sup{n(t): t <= state(x)}; since later states only decrease,
    λ mean(n*) < 4πN/|Ω| forces every later step to lower mean(w) by a fixed
    positive amount.  With ``bound_check`` set, couplings with λ sup(n) <= 4πN/|Ω|
    are Diverged before iterating: a solution would need mean n(u) = 4πN/(λ|Ω|),
    yet n(u) < sup(n) away from a null set.  Inconclusive: ``max_iters`` reached.
    """
    model = ModelKind.parse(model)
    cfg.validate_for(model)
    ops = spectral_ops(background.domain, background.grid)
    lam, K, c = cfg.lam, cfg.K, background.source
    v0 = background.v0.values
    nl = _Nonlinear(model, background, cfg)

    if initial is None:
        w = -v0.copy()
        first = first_iterate(background, K) if cfg.exact_first_step else None
    else:
        w = np.array(initial.values, dtype=float)
        first = None
    u, n_val = nl.evaluate(w)
    steps: collections.deque[float] = collections.deque(maxlen=cfg.stall_window)
    mins: collections.deque[float] = collections.deque(maxlen=cfg.stall_window)
    history: list[float] = []
    snapshots: list[tuple[int, np.ndarray]] = []
    if cfg.snapshot_every:
        snapshots.append((0, w.copy()))
    max_violation = -math.inf
    growth_run = longest_growth = 0
    status, reason = Status.INCONCLUSIVE, "iteration budget exhausted"
    it = 0
    res = math.inf
    budget = int(cfg.max_iters)
    if cfg.bound_check and lam * nonlinearity_sup(model) <= c:
        status, reason = Status.DIVERGED, "integral bound"
        budget = 0
    for it in range(1, budget + 1):
        if it == 1 and first is not None:
            w_new = first
        else:
            w_new = ops.helmholtz(-lam * n_val - K * w + c, K)
        step = w_new - w
        viol = float(step.max())
        max_violation = max(max_violation, viol)
        if viol > MONOTONE_ABORT:
            raise ContractError(
                f"iterate {it} increased by {viol:.3e} (> {MONOTONE_ABORT}); K too small or grid too coarse",
                {"iteration": it, "violation": viol, "lambda": lam, "K": K},
            )
        w = w_new
        sup_step = float(np.abs(step).max())
        growth_run = growth_run + 1 if history and sup_step > history[-1] else 0
        longest_growth = max(longest_growth, growth_run)
        history.append(sup_step)
        steps.append(sup_step)
        wmin = float(w.min())
        mins.append(wmin)
        if cfg.snapshot_every and it % cfg.snapshot_every == 0:
            snapshots.append((it, w.copy()))

        if wmin < cfg.divergence_floor:
            status, reason = Status.DIVERGED, "floor"
            break
        u, n_val = nl.evaluate(w)
        if sup_step < cfg.tol_iter:
            res = float(np.abs(ops.laplacian(w) + lam * n_val - c).max())
            if res <= cfg.tol_residual:
                status, reason = Status.CONVERGED, "tolerance"
                break
        if cfg.descent_certificate and viol <= MONOTONE_TOL:
            if lam * float(nonlinearity_envelope(model, u).mean()) < c * (1.0 - 1e-12):
                status, reason = Status.DIVERGED, "descent certificate"
                break
        if len(steps) == steps.maxlen and _stalled(steps, mins):
            status, reason = Status.DIVERGED, "stall"
            break

    if cfg.snapshot_every and (not snapshots or snapshots[-1][0] != it):
        snapshots.append((it, w.copy()))
    if status is not Status.CONVERGED:
        res = float(np.abs(ops.laplacian(w) + lam * n_val - c).max())
    w_field = ScalarField(w, background.domain, background.grid)
    qerr = None
    integral = lam * float(n_val.mean()) * background.domain.area
    if status is Status.CONVERGED:
        qerr = abs(integral - 4 * math.pi * background.N) / (4 * math.pi * background.N)
        if float((v0 + w).max()) >= 0.0:
            raise ContractError("converged state touches the vacuum value 0", {"max_state": float((v0 + w).max())})
    log.debug("%s lambda=%.6g: %s after %d iterations (%s)", model.value, lam, status.value, it, reason)
    return SolveOutcome(
        status=status,
        model=model,
        lam=lam,
        w=w_field,
        iterations=it,
        step_history=history[-cfg.stall_window:],
        residual=res,
        quantization_error=qerr,
        max_violation=max_violation,
        reason=reason,
        snapshots=snapshots,
        diagnostics={
            "quantization_integral": integral,
            "grad_norm_zero_mean": float(np.sqrt(np.mean(sum(g * g for g in ops.gradient(w)))
                                                 * background.domain.area)),
            "mean_w": float(w.mean()),
            "longest_growth_run": longest_growth,
        },
    )


def first_iterate(background: BackgroundField, K: float) -> np.ndarray:
    """w1 for the start w0 = -v0, from the screened Green's function.

    Since n(state(w0)) = 0, w1 solves (Δ - K)w1 = Kv0 + 4πN/|Ω|, whose exact
    solution is -v0 - 4π Σ n_j H_K(x - p_j) with (K - Δ)H_K = δ.  Sampling it
    avoids applying the discrete resolvent to the delta masses hidden in v0,
    which rings and can push v0 + w1 above zero.
    """
    dom, grid = background.domain, background.grid
    w1 = -background.v0.values.copy()
    for p, n in zip(background.config.points, background.config.multiplicities):
        w1 -= 4 * np.pi * n * screened_greens(dom, grid, p, K)
    return w1


def _stalled(steps, mins) -> bool:
    s = np.fromiter(steps, float)
    m = np.fromiter(mins, float)
    return bool(np.all(np.diff(s) > 0) and np.all(np.diff(m) < 0))


@dataclass(eq=False)
class SubsolutionCertificate:
    model: ModelKind
    w_star: ScalarField
    epsilon: float
    lambda_min_verified: float
    state_max: float
    ladder: list[tuple[float, float]] = field(default_factory=list)

    def defect(self, background: BackgroundField, lam: float) -> float:
        """min over samples of Δ_h w* + λ n(state) - 4πN/|Ω| (>= -1e-8 certifies)."""
        return _subsolution_defect(self.model, background, self.w_star.values, lam)


def _subsolution_defect(model, background, w_star, lam) -> float:
    ops = spectral_ops(background.domain, background.grid)
    v = np.minimum(background.v0.values + w_star, 0.0)
    u = inverse_G(v) if model.uses_transform else v
    r = ops.laplacian(w_star) + lam * nonlinearity(model, u) - background.source
    return float(r.min())


def _bump(r: np.ndarray, eps: float) -> np.ndarray:
    t = np.clip((r - eps) / eps, 0.0, 1.0)
    return 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


def build_subsolution(model, background: BackgroundField, epsilon: float, *,
                      state_max: float | None = None, ladder_ratio: float = 2 ** 0.125,
                      ladder_cap: float = 1e8) -> SubsolutionCertificate:
    """Construct a subsolution from bumps of radius ε around the vortices.

    f is 1 on B(p_j, ε), 0 outside B(p_j, 2ε) with a C² blend; g = (8πN/|Ω|)(f - mean f)
    and Δw = g is solved with zero mean.  The additive constant is fixed so that
    max(v0 + w*) = ``state_max``; when omitted, candidates 10^-6 ... 10 below zero
    are tried and the one with the smallest certified coupling is kept.  The
    coupling is scanned on a geometric ladder starting at the model's
    necessary bound.
    """
    model = ModelKind.parse(model)
    dom = background.domain
    N = background.N
    if not epsilon > 0:
        raise ConfigurationError("epsilon must be positive")
    if 8 * math.pi * N * epsilon ** 2 / dom.area >= 1:
        raise ConfigurationError("epsilon too large: 8πNε²/|Ω| must be < 1")
    if 2 * epsilon >= 0.5 * min(dom.L1, dom.L2):
        raise ConfigurationError("2ε-balls overlap their own periodic images")
    pts = background.config.points
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            rx, ry = _reduce(pts[i][0] - pts[j][0], pts[i][1] - pts[j][1], dom.L1, dom.L2)
            if math.hypot(float(rx), float(ry)) < 4 * epsilon:
                raise ConfigurationError(f"2ε-balls around {pts[i]} and {pts[j]} intersect")

    ops = spectral_ops(dom, background.grid)
    X, Y = background.grid.coordinates(dom)
    f = np.zeros(background.grid.shape)
    for px, py in pts:
        rx, ry = _reduce(X - px, Y - py, dom.L1, dom.L2)
        f += _bump(np.hypot(rx, ry), epsilon)
    g = (8 * math.pi * N / dom.area) * (f - f.mean())
    w_base = ops.poisson(g)
    top = float((background.v0.values + w_base).max())

    lam0 = background.source / nonlinearity_sup(model)
    candidates = [state_max] if state_max is not None else [-(10.0 ** k) for k in range(-6, 2)] + [-3.0, -5.0]
    best = None
    for target in candidates:
        if not target < 0:
            raise ConfigurationError("state_max must be negative")
        w_star = w_base - top + target
        lam, ladder = lam0, []
        while lam <= ladder_cap:
            d = _subsolution_defect(model, background, w_star, lam)
            ladder.append((lam, d))
            if d >= -1e-8:
                break
            lam *= ladder_ratio
        else:
            continue
        if best is None or lam < best.lambda_min_verified:
            best = SubsolutionCertificate(model, ScalarField(w_star, dom, background.grid), epsilon, lam,
                                          target, ladder)
    if best is None:
        raise ContractError("no coupling on the ladder certifies the subsolution", {"cap": ladder_cap})
    return best


def verify_maximality(model, background: BackgroundField, cfg: SolveConfig,
                      certificate: SubsolutionCertificate, *, tol: float = 1e-9,
                      outcome: SolveOutcome | None = None) -> bool:
    """Check w* <= w_n (+tol) for every stored iterate of a monotone solve."""
    model = ModelKind.parse(model)
    if cfg.lam < certificate.lambda_min_verified:
        raise DomainError(
            f"lambda={cfg.lam} is below the certified coupling {certificate.lambda_min_verified}"
        )
    if outcome is None:
        outcome = monotone_solve(model, background, _replace(cfg, snapshot_every=cfg.snapshot_every or 100))
    ws = certificate.w_star.values
    iterates = [snap for _, snap in outcome.snapshots] or [outcome.w.values]
    iterates.append(outcome.w.values)
    return all(bool(np.all(ws <= wn + tol)) for wn in iterates)
