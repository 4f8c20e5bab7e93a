"""The diffusion generator L = Δ - ∇V·∇, its carré du champ, and the
Lyapunov lemma check."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import random_corpus
from .expr import Expr, ScalarField, parse_potential
from .measure import GridFunction, Measure

TAPER_FRACTION = 0.05


class LemmaPrecondition(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorContext:
    V: ScalarField

    @property
    def dim(self) -> int:
        return self.V.dim


def _field(f, dim) -> ScalarField:
    if isinstance(f, ScalarField):
        return f
    if isinstance(f, str):
        f = parse_potential(f, dim)
    return ScalarField(f, dim)


def _pts(x, dim):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape[0] != dim:
        raise ValueError(f"point must have {dim} coordinates")
    return list(x)


def apply_L(ctx: GeneratorContext, f, x) -> float:
    """Lf(x) = Δf(x) - ∇V(x)·∇f(x) from symbolic derivatives."""
    F = _field(f, ctx.dim)
    p = _pts(x, ctx.dim)
    return float(F.laplacian(p) - np.dot(ctx.V.gradient(p), F.gradient(p)))


def gamma(ctx: GeneratorContext, f, g, x) -> float:
    """Γ(f, g)(x) = ∇f(x)·∇g(x)."""
    p = _pts(x, ctx.dim)
    return float(np.dot(_field(f, ctx.dim).gradient(p), _field(g, ctx.dim).gradient(p)))


def L_on_grid(ctx: GeneratorContext, f, pts) -> np.ndarray:
    F = _field(f, ctx.dim)
    return F.laplacian(pts) - np.sum(ctx.V.gradient(pts) * F.gradient(pts), axis=0)


# ------------------------------------------------------------------ psi

@dataclass(frozen=True)
class PsiFunction:
    """Increasing function from the closed menu used by the lemma."""

    tag: str  # identity | power | exp | affine-log
    q: float = 1.0

    def __post_init__(self):
        if self.tag not in ("identity", "power", "exp", "affine-log"):
            raise ValueError(f"unknown psi {self.tag!r}")
        if self.tag == "power" and not self.q > 0:
            raise ValueError("power psi needs q > 0 to be increasing")

    def value(self, u):
        u = np.asarray(u, dtype=float)
        if self.tag == "identity":
            return u
        if self.tag == "power":
            return u ** self.q
        if self.tag == "exp":
            return np.exp(u)
        return 1.0 + np.log1p(u)

    def deriv(self, u):
        u = np.asarray(u, dtype=float)
        if self.tag == "identity":
            return np.ones_like(u)
        if self.tag == "power":
            return self.q * u ** (self.q - 1.0)
        if self.tag == "exp":
            return np.exp(u)
        return 1.0 / (1.0 + u)

    def describe(self) -> str:
        return f"power(q={self.q:g})" if self.tag == "power" else self.tag


# ---------------------------------------------------------------- taper

def taper(m: Measure, fraction: float = TAPER_FRACTION) -> GridFunction:
    """C1 cutoff equal to 1 away from the box faces, 0 on them."""
    w = fraction * 2.0 * m.rmax
    val = np.ones(m.shape)
    parts = []
    for p in m.pts:
        t = (m.rmax - np.abs(p)) / w
        tc = np.clip(t, 0.0, 1.0)
        s = tc * tc * (3.0 - 2.0 * tc)
        ds = np.where((t > 0) & (t < 1), 6.0 * tc * (1.0 - tc), 0.0) * (-np.sign(p) / w)
        parts.append((s, ds))
    for s, _ in parts:
        val = val * s
    grad = []
    for k, (_, ds) in enumerate(parts):
        g = ds.copy()
        for j, (s, _) in enumerate(parts):
            if j != k:
                g = g * s
        grad.append(g)
    return GridFunction(val, np.stack(grad))


def _boundary_flux(m: Measure, fvals, hgrad, psih) -> float:
    total = 0.0
    for k in range(m.dim):
        for end in (0, -1):
            sl = [slice(None)] * m.dim
            sl[k] = end
            sl = tuple(sl)
            term = np.abs(fvals[sl] ** 2 / psih[sl] * hgrad[k][sl]) * m.density[sl]
            if m.dim == 2:
                term = term * m.axes[1 - k].weights
            total += float(np.sum(term))
    return total


# ---------------------------------------------------------------- lemma

@dataclass(frozen=True)
class LemmaResult:
    margin: float
    lhs: float
    rhs: float
    tapered: bool

    @property
    def scale(self) -> float:
        return abs(self.lhs) + abs(self.rhs)


def check_lemma(ctx: GeneratorContext, m: Measure, f, h, psi: PsiFunction,
                flux_tol: float = 1e-12) -> LemmaResult:
    """Return RHS - LHS of ∫(-Lh/ψ(h)) f² dμ ≤ ∫ Γ(f)/ψ'(h) dμ.

    ``f`` is multiplied by a boundary taper when the integration-by-parts
    flux through the box faces is not negligible.

    Raises
    ------
    LemmaPrecondition
        ``h < 1`` at some node, or ψ' ≤ 0 on the values of ``h``.
    """
    H = _field(h, ctx.dim)
    hv = H.value(m.pts)
    if np.any(hv < 1.0):
        raise LemmaPrecondition(f"h < 1 at some node (min {hv.min():.6g})")
    dpsi = psi.deriv(hv)
    if np.any(dpsi <= 0):
        raise LemmaPrecondition("psi' <= 0 on the range of h")
    psih = psi.value(hv)
    Lh = L_on_grid(ctx, H, m.pts)
    hgrad = H.gradient(m.pts)
    fg = m.grid_function(_field(f, ctx.dim) if not isinstance(f, GridFunction) else f)

    def sides(g: GridFunction):
        lhs = m.integrate(-Lh / psih * g.values ** 2)
        rhs = m.integrate(np.sum(g.grad ** 2, axis=0) / dpsi)
        return lhs, rhs

    lhs, rhs = sides(fg)
    flux = _boundary_flux(m, fg.values, hgrad, psih)
    tapered = flux > flux_tol * (abs(lhs) + abs(rhs) + 1e-300)
    if tapered:
        lhs, rhs = sides(fg * taper(m))
    return LemmaResult(rhs - lhs, lhs, rhs, bool(tapered))


PSI_MENU = (
    PsiFunction("identity"),
    PsiFunction("power", 0.5),
    PsiFunction("power", 2.0),
    PsiFunction("exp"),
    PsiFunction("affine-log"),
)


@dataclass(frozen=True)
class LemmaCase:
    f: str
    h: str
    psi: str
    result: LemmaResult


def lemma_suite(ctx: GeneratorContext, m: Measure, seed: int, count: int = 20,
                length_scale: float = 1.0, bounded: bool = False) -> list:
    """Randomized lemma checks with h = 1 + g² for corpus members g.

    The ψ = exp entry of the menu is only used when h stays below 700 on
    the grid so that e^h is finite.
    """
    from .expr import to_text

    fs = random_corpus(ctx.dim, count, seed, length_scale, bounded)
    gs = random_corpus(ctx.dim, count, seed + 1, length_scale, bounded)
    rng = np.random.default_rng(seed + 2)
    out = []
    for f, g in zip(fs, gs):
        h = 1.0 + g * g
        hmax = float(np.max(ScalarField(h, ctx.dim).value(m.pts)))
        menu = [p for p in PSI_MENU if p.tag != "exp" or hmax < 700]
        psi = menu[rng.integers(len(menu))]
        res = check_lemma(ctx, m, f, h, psi)
        out.append(LemmaCase(to_text(f), to_text(h), psi.describe(), res))
    return out


def ibp_defect(ctx: GeneratorContext, m: Measure, f, g) -> tuple:
    """(|∫ f Lg dμ + ∫ Γ(f,g) dμ|, scale) for the discrete symmetry check."""
    F = _field(f, ctx.dim)
    G = _field(g, ctx.dim)
    a = m.integrate(F.value(m.pts) * L_on_grid(ctx, G, m.pts))
    b = m.integrate(np.sum(F.gradient(m.pts) * G.gradient(m.pts), axis=0))
    return abs(a + b), abs(a) + abs(b)


def lemma_tolerance(res: LemmaResult, rel: float = 1e-8) -> float:
    return -rel * res.scale if math.isfinite(res.scale) else -math.inf
