"""Critical coupling by bisection and the two monotonicity experiments.

Solutions exist on an interval of couplings, so classifying a probe as
Converged or Diverged and bisecting brackets the threshold λ_c.
"""
from __future__ import annotations

import functools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .domain import GridSpec, ScalarField, TorusDomain, VortexConfiguration
from .errors import ConfigurationError, ContractError, DomainError, ScanError
from .greens import BackgroundField, build_background
from .solver import SolveConfig, SolveOutcome, Status, monotone_solve
from .transform import ModelKind, nonlinearity_sup

__all__ = [
    "Probe",
    "CriticalScan",
    "necessary_bound",
    "kappa_bound",
    "find_critical_lambda",
    "MonotonicityReport",
    "verify_lambda_monotonicity",
    "SMonotonicityReport",
    "verify_S_monotonicity",
]

log = logging.getLogger(__name__)

INCONCLUSIVE_POLICIES = ("diverged", "converged", "raise")


def necessary_bound(model, domain: TorusDomain, N: int) -> float:
    """Lower bound on λ_c from integrating the reduced equation: 4πN / (|Ω| sup n)."""
    model = ModelKind.parse(model)
    return 4 * math.pi * N / (domain.area * nonlinearity_sup(model))


def kappa_bound(model, domain: TorusDomain, N: int) -> float:
    """Upper bound on κ_c = 1/√λ_c matching ``necessary_bound``."""
    return 1.0 / math.sqrt(necessary_bound(model, domain, N))


@dataclass(frozen=True)
class Probe:
    lam: float
    status: Status
    iterations: int
    reason: str
    seconds: float
    max_violation: float = math.nan


@dataclass(eq=False)
class CriticalScan:
    """Bisection record: ``lower`` is Diverged (or counted as such), ``upper`` Converged."""

    model: ModelKind
    config: VortexConfiguration
    domain: TorusDomain
    probes: list[Probe]
    lower: float
    upper: float
    rel_tol: float
    inconclusive_policy: str = "diverged"
    upper_outcome: SolveOutcome | None = field(default=None, repr=False)

    @property
    def lambda_c_estimate(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def bracket_width(self) -> float:
        return self.upper - self.lower

    @property
    def kappa_c(self) -> float:
        return 1.0 / math.sqrt(self.lambda_c_estimate)

    @property
    def lower_bound(self) -> float:
        return necessary_bound(self.model, self.domain, self.config.N)

    @property
    def bound_satisfied(self) -> bool:
        return self.lambda_c_estimate >= self.lower_bound

    @property
    def kappa_bound_satisfied(self) -> bool:
        return 0 < self.kappa_c <= kappa_bound(self.model, self.domain, self.config.N)

    @property
    def inconclusive(self) -> list[float]:
        return [p.lam for p in self.probes if p.status is Status.INCONCLUSIVE]

    def summary(self) -> dict:
        return {
            "model": self.model.value,
            "N": self.config.N,
            "lower": self.lower,
            "upper": self.upper,
            "lambda_c_estimate": self.lambda_c_estimate,
            "bracket_width": self.bracket_width,
            "kappa_c": self.kappa_c,
            "lambda_bound": self.lower_bound,
            "bound_satisfied": self.bound_satisfied,
            "kappa_bound": kappa_bound(self.model, self.domain, self.config.N),
            "kappa_bound_satisfied": self.kappa_bound_satisfied,
            "probes": len(self.probes),
            "inconclusive": self.inconclusive,
        }


class _Prober:
    def __init__(self, model, background, cfg, policy, warm_start):
        self.model = model
        self.background = background
        self.cfg = cfg
        self.policy = policy
        self.warm_start = warm_start
        self.probes: list[Probe] = []
        self.converged: dict[float, SolveOutcome] = {}

    def _start(self, lam: float) -> ScalarField | None:
        if not self.warm_start:
            return None
        above = [l for l in self.converged if l > lam]
        return self.converged[min(above)].w if above else None

    def __call__(self, lam: float) -> bool:
        t0 = time.perf_counter()
        outcome = monotone_solve(self.model, self.background, self.cfg.with_lambda(lam), self._start(lam))
        self.probes.append(Probe(lam, outcome.status, outcome.iterations, outcome.reason,
                                 time.perf_counter() - t0, outcome.max_violation))
        log.info("probe lambda=%.8g: %s (%s, %d iterations)", lam, outcome.status.value, outcome.reason,
                 outcome.iterations)
        if outcome.status is Status.CONVERGED:
            self.converged[lam] = outcome
            ok = True
        elif outcome.status is Status.DIVERGED:
            ok = False
        elif self.policy == "raise":
            raise ScanError(f"probe at lambda={lam} was Inconclusive", self.probes)
        else:
            ok = self.policy == "converged"
        self._check_order()
        return ok

    def _counts_as_converged(self, p: Probe) -> bool:
        if p.status is Status.INCONCLUSIVE:
            return self.policy == "converged"
        return p.status is Status.CONVERGED

    def _check_order(self) -> None:
        yes = [p.lam for p in self.probes if self._counts_as_converged(p)]
        no = [p.lam for p in self.probes if not self._counts_as_converged(p)]
        if yes and no and min(yes) < max(no):
            raise ContractError(
                f"non-monotone classification: Converged at {min(yes)} below a Diverged probe at {max(no)}",
                {"probes": list(self.probes)},
            )


def find_critical_lambda(model, background: BackgroundField, bracket: tuple[float, float] | None = None,
                         rel_tol: float = 1e-2, cfg: SolveConfig | None = None, *,
                         cap: float = 1e4, inconclusive: str = "diverged",
                         warm_start: bool = False, max_probes: int = 200) -> CriticalScan:
    """Bracket λ_c and bisect until (upper - lower) / midpoint <= ``rel_tol``.

    The default bracket starts at the necessary bound.  A Diverged upper end is
    doubled up to ``cap``; a Converged lower end is halved, never below the bound.
    ``inconclusive`` decides how probes that exhaust their budget count:
    "diverged" (conservative, the default), "converged" or "raise".
    """
    model = ModelKind.parse(model)
    if not (rel_tol > 0 and math.isfinite(rel_tol)):
        raise ConfigurationError(f"rel_tol must be positive, got {rel_tol!r}")
    if inconclusive not in INCONCLUSIVE_POLICIES:
        raise ConfigurationError(f"inconclusive policy must be one of {INCONCLUSIVE_POLICIES}")
    bound = necessary_bound(model, background.domain, background.N)
    if bracket is None:
        bracket = (bound, 2 * bound)
    lo, hi = (float(b) for b in bracket)
    if not 0 < lo < hi:
        raise ConfigurationError(f"bracket must satisfy 0 < lo < hi, got {bracket}")
    if cfg is None:
        cfg = SolveConfig(lam=hi)
    cfg.validate_for(model)
    probe = _Prober(model, background, cfg, inconclusive, warm_start)

    def budget_left():
        if len(probe.probes) >= max_probes:
            raise ScanError(f"probe budget {max_probes} exhausted", probe.probes)

    # widening runs from the top so that warm starts always have a field above
    while not probe(hi):
        budget_left()
        lo = max(lo, hi)
        hi *= 2
        if hi > cap:
            raise ScanError(f"no Converged probe up to the cap {cap}", probe.probes)
    while probe(lo):
        budget_left()
        if lo <= bound:
            raise ScanError(f"Converged at lambda={lo}, at or below the necessary bound {bound}", probe.probes)
        hi = lo
        lo = max(lo / 2, bound)
    while (hi - lo) / (0.5 * (hi + lo)) > rel_tol:
        budget_left()
        mid = 0.5 * (lo + hi)
        if probe(mid):
            hi = mid
        else:
            lo = mid
    return CriticalScan(model, background.config, background.domain, probe.probes, lo, hi, rel_tol,
                        inconclusive, probe.converged.get(hi))


@dataclass(eq=False)
class MonotonicityReport:
    """Pairwise minimum of w_{λ_{i+1}} - w_{λ_i}; passes when every margin exceeds -tol."""

    lambdas: list[float]
    margins: list[float]
    tol: float
    outcomes: list[SolveOutcome] = field(default_factory=list, repr=False)

    @property
    def passed(self) -> bool:
        return all(m > -self.tol for m in self.margins)

    def __bool__(self) -> bool:
        return self.passed


def _solve_at(model, background, cfg, lam):
    return monotone_solve(model, background, cfg.with_lambda(lam))


def verify_lambda_monotonicity(model, background: BackgroundField, lambdas, cfg: SolveConfig | None = None,
                               *, tol: float = 1e-9, mapper=map) -> MonotonicityReport:
    """Solve at each coupling of an ascending ladder and compare consecutive maximal solutions.

    ``mapper`` runs the independent solves, e.g. ``executor.map`` for a process pool.
    """
    model = ModelKind.parse(model)
    lambdas = [float(l) for l in lambdas]
    if not lambdas:
        raise ConfigurationError("empty coupling ladder")
    if any(b < a for a, b in zip(lambdas, lambdas[1:])):
        raise ConfigurationError("couplings must be in ascending order")
    cfg = cfg or SolveConfig(lam=lambdas[0])
    outcomes = list(mapper(functools.partial(_solve_at, model, background, cfg), lambdas))
    for lam, out in zip(lambdas, outcomes):
        if not out.converged:
            raise ContractError(f"lambda={lam} did not converge ({out.status.value}: {out.reason})",
                                {"lambda": lam, "status": out.status.value})
    margins = [float(np.min(b.w.values - a.w.values)) for a, b in zip(outcomes, outcomes[1:])]
    return MonotonicityReport(lambdas, margins, tol, outcomes)


@dataclass(eq=False)
class SMonotonicityReport:
    scan: CriticalScan
    scan_prime: CriticalScan

    @property
    def slack(self) -> float:
        return 0.5 * (self.scan.bracket_width + self.scan_prime.bracket_width)

    @property
    def passed(self) -> bool:
        return self.scan.lambda_c_estimate <= self.scan_prime.lambda_c_estimate + self.slack

    @property
    def kappa_passed(self) -> bool:
        """κ_c(S) >= κ_c(S') with the bracket slack carried over through κ = 1/√λ."""
        return self.scan.kappa_c >= 1.0 / math.sqrt(self.scan_prime.lambda_c_estimate + self.slack)

    def __bool__(self) -> bool:
        return self.passed


def _scan(model, domain, grid, rel_tol, cfg, scan_options, conf):
    bg = build_background(domain, grid, conf)
    return find_critical_lambda(model, bg, None, rel_tol, cfg, **scan_options)


def verify_S_monotonicity(model, domain: TorusDomain, grid: GridSpec, S: VortexConfiguration,
                          S_prime: VortexConfiguration, rel_tol: float = 1e-2,
                          cfg: SolveConfig | None = None, *, mapper=map, **scan_options) -> SMonotonicityReport:
    """Compare λ_c for S <= S' (same points, multiplicities no larger)."""
    if not S.dominated_by(S_prime):
        raise DomainError("S is not dominated by S'; need the same points with n_j <= n'_j")
    job = functools.partial(_scan, ModelKind.parse(model), domain, grid, rel_tol, cfg, scan_options)
    return SMonotonicityReport(*mapper(job, (S, S_prime)))
