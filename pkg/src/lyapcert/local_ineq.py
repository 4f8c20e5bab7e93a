"""Local inequalities on balls: Neumann Poincaré constants and Nash-type
local super Poincaré functions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fv
from .measure import GridFunction, Measure

RICHARDSON_GATE = 0.02
NASH_CONSTANTS = {1: 1.0, 2: 1.5}


class ResolutionTooCoarse(ValueError):
    pass


class ViolationFound(ArithmeticError):
    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


@dataclass(frozen=True)
class LocalPoincare:
    R: float
    kappa: float
    method: str
    nodes: int
    ball_mass: float
    lambda_coarse: float
    lambda_fine: float

    @property
    def richardson_delta(self) -> float:
        return abs(self.lambda_coarse - self.lambda_fine) / self.lambda_fine

    def to_dict(self):
        return {"R": self.R, "kappa": self.kappa, "method": self.method,
                "nodes": self.nodes, "ball_mass": self.ball_mass,
                "lambda_neumann": self.lambda_fine,
                "richardson_delta": self.richardson_delta}


def _neumann_lambda(m: Measure, R: float, nodes: int) -> float:
    if m.dim == 1:
        return fv.smallest_nonzero_1d(fv.build_1d(m.V, -R, R, nodes))
    return fv.smallest_nonzero_2d(fv.build_2d(m.V, -R, R, nodes, radius=R))


def neumann_kappa(m: Measure, R: float, nodes: int = None,
                  gate: float = RICHARDSON_GATE) -> LocalPoincare:
    """κ_R = 1/λ₁ of -L on B_R with zero-flux boundary.

    The eigenvalue is computed at ``nodes`` and ``2*nodes`` cells across
    the ball; κ_R comes from the finer one.  Defaults: 2048 cells in 1D, 64
    in 2D.

    Raises
    ------
    ResolutionTooCoarse
        Fewer than 32 cells, or the two resolutions differ by more than
        ``gate``.
    """
    if nodes is None:
        nodes = 2048 if m.dim == 1 else 64
    if nodes < 32:
        raise ResolutionTooCoarse("need at least 32 cells across the ball")
    if not 0 < R <= m.rmax * (1 + 1e-12):
        raise ValueError("need 0 < R <= rmax")
    lc = _neumann_lambda(m, R, nodes)
    lf = _neumann_lambda(m, R, 2 * nodes)
    if lc <= 0 or lf <= 0:
        raise fv.EigSolveFailure("non-positive Neumann eigenvalue")
    if abs(lc - lf) / lf > gate:
        raise ResolutionTooCoarse(
            f"Richardson delta {abs(lc - lf) / lf:.3%} exceeds {gate:.0%}")
    method = "neumann-fd" if m.dim == 1 else "neumann-fd-ball"
    return LocalPoincare(float(R), 1.0 / lf, method, 2 * nodes, m.ball_mass(R), lc, lf)


def uniform_kappa(R: float) -> float:
    """Closed form (2R/π)² for the flat measure on [-R, R]."""
    return (2.0 * R / math.pi) ** 2


def local_poincare_margins(m: Measure, loc: LocalPoincare, corpus) -> list:
    """κ∫Γ(f)dμ + μ(B)⁻¹(∫_B f dμ)² - ∫_B f² dμ for each f, with scales."""
    inside = m.radius <= loc.R
    mb = float(np.sum(m.mass[inside]))
    out = []
    for f in corpus:
        g = m.grid_function(f)
        dir_ = m.integrate(np.sum(g.grad ** 2, axis=0))
        lhs = float(np.sum(m.mass[inside] * g.values[inside] ** 2))
        mean = float(np.sum(m.mass[inside] * g.values[inside]))
        rhs = loc.kappa * dir_ + mean * mean / mb
        out.append((rhs - lhs, abs(rhs) + abs(lhs)))
    return out


# ------------------------------------------------------------ super PI

@dataclass
class LocalSuperPoincare:
    """β_loc(r, s) from the Lebesgue Nash inequality on balls, carried over
    to μ by the density bounds on the ball."""

    m: Measure
    c_n: float = None
    _bounds: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.c_n is None:
            self.c_n = NASH_CONSTANTS[self.m.dim]

    def log_density_bounds(self, r: float):
        """(log ρ_min, log ρ_max) of e^{-V}/Z on B_r, sampled on the ball."""
        key = float(r)
        if key not in self._bounds:
            if self.m.dim == 1:
                pts = [np.linspace(-r, r, 4001)]
            else:
                rr = np.linspace(0.0, r, 401)[1:]
                th = np.linspace(0, 2 * np.pi, 256, endpoint=False)
                R_, T_ = np.meshgrid(rr, th, indexing="ij")
                pts = [np.append((R_ * np.cos(T_)).ravel(), 1e-9),
                       np.append((R_ * np.sin(T_)).ravel(), 0.0)]
            lr = -self.m.V.value(pts) - self.m.logZ
            self._bounds[key] = (float(lr.min()), float(lr.max()))
        return self._bounds[key]

    def ball_volume(self, r: float) -> float:
        return 2.0 * r if self.m.dim == 1 else math.pi * r * r

    def log_beta(self, r: float, s: float) -> float:
        if s <= 0 or r <= 0:
            raise ValueError("need r > 0 and s > 0")
        lmin, lmax = self.log_density_bounds(r)
        n = self.m.dim
        branch = max(-0.5 * n * (math.log(s) + lmin - lmax), -math.log(self.ball_volume(r)))
        return lmax - 2.0 * lmin + math.log(self.c_n) + branch

    def beta(self, r: float, s: float) -> float:
        lb = self.log_beta(r, s)
        return math.exp(lb) if lb < 709.0 else math.inf


def nash_beta_loc(m: Measure, r: float, s: float, c_n: float = None) -> float:
    """β_loc(r,s) = ρ_max ρ_min⁻² c_n max((s ρ_min/ρ_max)^{-n/2}, |B_r|⁻¹)."""
    return LocalSuperPoincare(m, c_n).beta(r, s)


def verify_local_sp(m: Measure, corpus, r: float, s: float, beta: float,
                    rel_tol: float = 1e-8, raise_on_violation: bool = True) -> list:
    """Margins s∫Γ(f)dμ + β(∫_{B_r}|f|dμ)² - ∫_{B_r} f² dμ over ``corpus``.

    Raises
    ------
    ViolationFound
        Some margin falls below ``-rel_tol * scale``; the Nash constant is
        too small for this measure.
    """
    inside = m.radius <= r
    out = []
    for k, f in enumerate(corpus):
        g = m.grid_function(f)
        dir_ = m.integrate(np.sum(g.grad ** 2, axis=0))
        l1 = float(np.sum(m.mass[inside] * np.abs(g.values[inside])))
        l2 = float(np.sum(m.mass[inside] * g.values[inside] ** 2))
        rhs = s * dir_ + beta * l1 * l1
        margin = rhs - l2
        scale = abs(rhs) + abs(l2)
        if raise_on_violation and margin < -rel_tol * scale:
            raise ViolationFound(f"local super Poincare violated by corpus member {k}", k)
        out.append((margin, scale))
    return out
