"""Gauge-invariant fields and the quantized totals carried by a solution."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import ScalarField, integrate, spectral_ops
from .errors import ContractError, DomainError
from .greens import BackgroundField
from .solver import SolveOutcome, residual, state_from
from .transform import ModelKind, nonlinearity

__all__ = [
    "PhysicalFields",
    "Totals",
    "reconstruct_fields",
    "quantization_integral",
    "energy_flux_charge",
]

# residual accepted when reconstruct_fields is handed a bare field instead of an outcome
RAW_FIELD_RESIDUAL = 1e-6


@dataclass(frozen=True, eq=False)
class PhysicalFields:
    u: ScalarField
    higgs_sq: ScalarField
    magnetic: ScalarField
    charge_density: ScalarField
    kappa: float

    def with_kappa(self, kappa: float) -> "PhysicalFields":
        """Same solution fields, charge density rescaled to a different κ."""
        return PhysicalFields(self.u, self.higgs_sq, self.magnetic,
                              self.charge_density * (kappa / self.kappa), float(kappa))


@dataclass(frozen=True)
class Totals:
    E: float
    Phi: float
    Q: float
    N: int
    kappa: float

    @property
    def flux_error(self) -> float:
        return abs(self.Phi - 2 * math.pi * self.N) / (2 * math.pi * self.N)

    @property
    def energy_error(self) -> float:
        return abs(self.E - 2 * math.pi * self.N) / (2 * math.pi * self.N)

    @property
    def charge_error(self) -> float:
        target = 2 * self.kappa * math.pi * self.N
        return abs(self.Q - target) / target

    def as_dict(self) -> dict:
        return {"E": self.E, "Phi": self.Phi, "Q": self.Q, "kappa": self.kappa, "N": self.N,
                "flux_error": self.flux_error, "energy_error": self.energy_error,
                "charge_error": self.charge_error}


def reconstruct_fields(model, background: BackgroundField, solution: SolveOutcome | ScalarField,
                       lam: float | None = None) -> PhysicalFields:
    """|φ|², F12 and ρ from a converged w.

    F12 = -½Δu splits as 2πN/|Ω| - ½Δw - ½Δ(u - v): the constant is the regular
    part of -½Δv0 and u - v = e^u - 1 is smooth, so no point mass reaches the
    grid.  For Taubes u = v and the last term is absent.  In ρ the term
    e^u|∇u|² is formed as e^u|∇v|²/(1 - e^u)² with the analytic ∇v0.
    """
    model = ModelKind.parse(model)
    if isinstance(solution, SolveOutcome):
        if not solution.converged:
            raise ContractError(f"cannot reconstruct fields from a {solution.status.value} solve",
                                {"status": solution.status.value, "reason": solution.reason})
        w = solution.w
        lam = solution.lam if lam is None else lam
    else:
        w = solution
        if lam is None:
            raise DomainError("lambda is required with a bare field")
        res = residual(model, background, w, lam)
        if res > RAW_FIELD_RESIDUAL:
            raise ContractError(f"field is not a solution (residual {res:.3e})", {"residual": res})
    if not lam > 0:
        raise DomainError("lambda must be positive")
    kappa = 1.0 / math.sqrt(lam)
    ops = spectral_ops(background.domain, background.grid)
    u = state_from(model, background, w).values
    s = np.exp(u)
    lap_u_reg = -background.source + ops.laplacian(w.values)
    if model.uses_transform:
        lap_u_reg = lap_u_reg + ops.laplacian(np.expm1(u))
    magnetic = -0.5 * lap_u_reg

    wx, wy = ops.gradient(w.values)
    vx = background.grad_x.values + wx
    vy = background.grad_y.values + wy
    one_minus = -np.expm1(u)
    grad_v_sq = vx * vx + vy * vy
    if model.uses_transform:
        e_grad_sq = s * grad_v_sq / one_minus ** 2
    else:
        e_grad_sq = s * grad_v_sq
    rho = kappa * (one_minus * magnetic + 0.5 * e_grad_sq)
    like = w.like
    return PhysicalFields(like(u), like(s), like(magnetic), like(rho), kappa)


def quantization_integral(model, u: ScalarField, lam: float) -> float:
    """λ ∫ n(u) dx, which equals 4πN for a true solution."""
    if float(u.values.max()) > 0.0:
        raise DomainError("u must be <= 0 at every sample")
    return float(lam) * integrate(u.like(nonlinearity(model, u.values)))


def energy_flux_charge(fields: PhysicalFields, N: int) -> Totals:
    """(E, Φ, Q) with Φ = ∫F12, E = Φ by self-duality and Q = ∫ρ."""
    phi = integrate(fields.magnetic)
    return Totals(E=phi, Phi=phi, Q=integrate(fields.charge_density), N=int(N), kappa=fields.kappa)
