"""Assembly of inequality certificates from verified drift conditions and
local inequalities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from . import expr as E
from .expr import Const, ScalarField
from .generator import GeneratorContext
from .local_ineq import LocalPoincare, LocalSuperPoincare
from .lyapunov import (TAIL_REACH, DriftEvaluator, LyapunovCertificate, NoFeasiblePoint,
                       PhiFunction, make_candidate, search_parameters, tail_verdict)
from .measure import Measure, build_measure, sample


class RadiusMismatch(ValueError):
    pass


class WrongPhiRegime(ValueError):
    pass


class FInvertFailure(ValueError):
    pass


class GNotDecreasing(ValueError):
    pass


class MissingPoincare(ValueError):
    pass


def _same_radius(a: float, b: float) -> bool:
    return abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


# -------------------------------------------------------------- Poincaré

@dataclass(frozen=True)
class PoincareCertificate:
    C: float
    lam: float
    b: float
    R: float
    kappa: float
    provenance: str

    def recheck(self) -> bool:
        return self.C == (self.b * self.kappa + 1.0) / self.lam

    def to_dict(self):
        return {"C": self.C, "lambda": self.lam, "b": self.b, "R": self.R,
                "kappa_R": self.kappa, "provenance": self.provenance,
                "recheck": self.recheck()}


def assemble_poincare(lin: LyapunovCertificate, loc: LocalPoincare) -> PoincareCertificate:
    """C = (b κ_R + 1) / λ from a linear drift certificate and κ_R."""
    if lin.shape != "linear":
        raise ValueError("Poincare assembly needs a linear drift certificate")
    lam, b, R = lin.params["lambda"], lin.params["b"], lin.params["R"]
    if not _same_radius(R, loc.R):
        raise RadiusMismatch(f"drift radius {R} != local radius {loc.R}")
    C = (b * loc.kappa + 1.0) / lam
    prov = (f"linear drift {lin.candidate.label()} lambda={lam:.6g} b={b:.6g} "
            f"R={R:.6g}; kappa_R={loc.kappa:.6g} ({loc.method})")
    return PoincareCertificate(C, lam, b, R, loc.kappa, prov)


# ------------------------------------------------------- weighted / converse

def phi_ratio_expr(phi: PhiFunction, W: E.Expr) -> E.Expr:
    if phi.tag == "linear":
        return Const(phi.c)
    if phi.tag == "power":
        return Const(phi.c) * W ** Const(phi.exponent - 1.0)
    return E.call("log", Const(phi.shift) + W) ** Const(phi.exponent)


def phi_deriv_expr(phi: PhiFunction, W: E.Expr) -> E.Expr:
    if phi.tag == "linear":
        return Const(phi.c)
    if phi.tag == "power":
        return Const(phi.c * phi.exponent) * W ** Const(phi.exponent - 1.0)
    L = E.call("log", Const(phi.shift) + W)
    return L ** Const(phi.exponent) + Const(phi.exponent) * W * L ** Const(phi.exponent - 1.0) \
        / (Const(phi.shift) + W)


@dataclass(frozen=True)
class WeightedPoincareCertificate:
    direction: str  # weighted | converse
    constant: float
    weight: E.Expr
    b: float
    kappa: float
    phi_at_one: float

    def recheck(self) -> bool:
        if self.direction == "weighted":
            return self.constant == max(self.b * self.kappa / self.phi_at_one, 1.0)
        return self.constant == 1.0 + self.b * self.kappa

    def to_dict(self):
        return {"direction": self.direction, "constant": self.constant,
                "weight": E.to_text(self.weight), "b": self.b, "kappa_R": self.kappa,
                "phi_at_one": self.phi_at_one, "recheck": self.recheck()}


def assemble_weighted(phi_cert: LyapunovCertificate, loc: LocalPoincare,
                      direction: str, m: Optional[Measure] = None) -> WeightedPoincareCertificate:
    """Weighted (weight 1 + 1/φ'(W)) or converse (weight φ(W)/W) inequality.

    Raises
    ------
    WrongPhiRegime
        φ is not sublinear.
    """
    if phi_cert.shape != "phi" or phi_cert.phi is None:
        raise ValueError("weighted assembly needs a phi drift certificate")
    phi = phi_cert.phi
    if phi.regime_flag != "sublinear":
        raise WrongPhiRegime(f"weighted inequalities need a sublinear phi, got {phi.regime_flag}")
    if not _same_radius(phi_cert.params["r0"], loc.R):
        raise RadiusMismatch("drift radius differs from local Poincare radius")
    b = phi_cert.params["b"]
    W = phi_cert.candidate.W
    if direction == "weighted":
        phi1 = float(phi.value(1.0))
        const = max(b * loc.kappa / phi1, 1.0)
        weight = Const(1.0) + Const(1.0) / phi_deriv_expr(phi, W)
    elif direction == "converse":
        phi1 = float(phi.value(1.0))
        const = 1.0 + b * loc.kappa
        weight = phi_ratio_expr(phi, W)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    cert = WeightedPoincareCertificate(direction, const, weight, b, loc.kappa, phi1)
    if m is not None and np.any(m.values(weight) <= 0):
        raise ArithmeticError("weight not positive on the grid")
    return cert


def weighted_margins(m: Measure, cert: WeightedPoincareCertificate, corpus) -> list:
    """Per-f (margin, scale) for the weighted or converse inequality."""
    w = m.values(cert.weight)
    out = []
    for f in corpus:
        g = m.grid_function(f)
        gam = np.sum(g.grad ** 2, axis=0)
        if cert.direction == "weighted":
            mean = m.integrate(g.values)
            lhs = m.integrate((g.values - mean) ** 2)
            rhs = cert.constant * m.integrate(w * gam)
        else:
            cbest = m.integrate(g.values * w) / m.integrate(w)
            lhs = m.integrate((g.values - cbest) ** 2 * w)
            rhs = cert.constant * m.integrate(gam)
        out.append((rhs - lhs, abs(rhs) + abs(lhs)))
    return out


# ----------------------------------------------------------------- weak PI

@dataclass
class WeakPoincareCurve:
    s: np.ndarray
    alpha: np.ndarray
    finv: np.ndarray
    saturated: np.ndarray
    C_wp: float
    u_table: np.ndarray
    F_table: np.ndarray
    osc_note: str = "Osc is grid max minus grid min"
    mc_check: Optional[dict] = None

    def slope(self, lo: float = 1e-4, hi: float = 1e-1) -> float:
        """Least-squares slope of log F^{-1}(s) against log s on [lo, hi]."""
        sel = (self.s >= lo) & (self.s <= hi) & (self.finv > 0)
        return float(np.polyfit(np.log(self.s[sel]), np.log(self.finv[sel]), 1)[0])

    def to_dict(self, table_rows: int = 200):
        step = max(1, len(self.u_table) // table_rows)
        d = {"C_wp": self.C_wp, "s": list(self.s), "alpha": list(self.alpha),
             "finv": list(self.finv), "saturated": [bool(x) for x in self.saturated],
             "F_table": {"u": list(self.u_table[::step]), "F": list(self.F_table[::step])},
             "osc_convention": self.osc_note}
        if self.mc_check is not None:
            d["monte_carlo"] = self.mc_check
        return d


def _ratio_on_grid(cert: LyapunovCertificate, ctx: GeneratorContext, m: Measure):
    ev = DriftEvaluator(ctx, cert.candidate)
    return cert.phi.ratio_log(ev.log_w(m.pts)), ev


def weak_curve(phi_cert: LyapunovCertificate, loc: LocalPoincare, m: Measure,
               s_grid, ctx: Optional[GeneratorContext] = None,
               mc_seed: Optional[int] = None) -> WeakPoincareCurve:
    """α(s) = C_wp / F⁻¹(s) with F(u) = μ(φ(W) < uW), C_wp = 1 + bκ_R.

    F is the exact distribution of φ(W)/W on the grid quadrature, with the
    truncated tail mass placed at ratio 0.  F⁻¹(s) = inf{u : F(u) > s}.
    """
    if phi_cert.phi is None or phi_cert.phi.regime_flag != "sublinear":
        raise WrongPhiRegime("weak Poincare needs a sublinear phi")
    if not _same_radius(phi_cert.params["r0"], loc.R):
        raise RadiusMismatch("drift radius differs from local Poincare radius")
    ctx = ctx or GeneratorContext(m.V)
    s_grid = np.asarray(s_grid, dtype=float)
    if np.any((s_grid <= 0) | (s_grid >= 1)):
        raise ValueError("s values must lie in (0, 1)")
    ratio, _ = _ratio_on_grid(phi_cert, ctx, m)
    tail = m.tail_fraction
    vals = np.concatenate([[0.0], ratio.ravel()])
    mass = np.concatenate([[tail], m.mass.ravel() * (1.0 - tail)])
    order = np.argsort(vals, kind="stable")
    v, w = vals[order], mass[order]
    uniq, start = np.unique(v, return_index=True)
    wsum = np.add.reduceat(w, start)
    cum_incl = np.cumsum(wsum)
    F_at = cum_incl - wsum  # F(u) = mu(ratio < u) at each distinct value
    finv = np.empty_like(s_grid)
    sat = np.zeros(s_grid.shape, dtype=bool)
    for i, s in enumerate(s_grid):
        j = int(np.searchsorted(cum_incl, s, side="right"))
        if j >= len(uniq):
            raise FInvertFailure(f"F never exceeds s={s}")
        finv[i] = uniq[j]
        sat[i] = j == len(uniq) - 1
    C_wp = 1.0 + phi_cert.params["b"] * loc.kappa
    with np.errstate(divide="ignore"):
        alpha = np.where(finv > 0, C_wp / finv, np.inf)
    mc = None
    if m.dim == 2 and mc_seed is not None:
        mc = _mc_F(phi_cert, ctx, m, finv, mc_seed)
    return WeakPoincareCurve(s_grid, alpha, finv, sat, C_wp, uniq, F_at, mc_check=mc)


def _mc_F(cert, ctx, m, us, seed, count=20000):
    ev = DriftEvaluator(ctx, cert.candidate)
    smp = sample(m, count, seed)
    pts = [smp.points[:, 0], smp.points[:, 1]]
    r = cert.phi.ratio_log(ev.log_w(pts))
    est = np.array([np.mean(r < u) for u in us])
    se = np.sqrt(est * (1 - est) / count)
    return {"u": list(us), "F_mc": list(est), "stderr": list(se),
            "acceptance": smp.acceptance}


def weak_margins(m: Measure, curve: WeakPoincareCurve, corpus) -> list:
    """(margin, scale) of Var ≤ α(s)∫Γ + s·Osc² for every (f, s)."""
    out = []
    for f in corpus:
        g = m.grid_function(f)
        mean = m.integrate(g.values)
        var = m.integrate((g.values - mean) ** 2)
        dir_ = m.integrate(np.sum(g.grad ** 2, axis=0))
        osc = float(g.values.max() - g.values.min())
        for s, a in zip(curve.s, curve.alpha):
            rhs = a * dir_ + s * osc * osc
            out.append((rhs - var, abs(rhs) + abs(var)))
    return out


# ---------------------------------------------------------------- super PI

@dataclass
class SuperPoincareCurve:
    s: np.ndarray
    beta_tilde: np.ndarray
    log_beta_tilde: np.ndarray
    radii: np.ndarray  # G^{-1}(s)
    c_r0: float
    r_table: np.ndarray
    G_table: np.ndarray
    sup_W_ball: float
    inf_ratio_outside: float
    b: float
    dirichlet_factor: float = 2.0
    tail_verdict: str = "dominates"

    def recheck_c_r0(self) -> bool:
        return self.c_r0 == 1.0 + self.b * self.sup_W_ball / self.inf_ratio_outside

    def to_dict(self, table_rows: int = 200):
        step = max(1, len(self.r_table) // table_rows)
        return {"s": list(self.s), "beta_tilde": list(self.beta_tilde),
                "log_beta_tilde": list(self.log_beta_tilde), "G_inverse": list(self.radii),
                "c_r0": self.c_r0, "c_r0_recheck": self.recheck_c_r0(),
                "sup_W_ball": self.sup_W_ball, "inf_ratio_outside": self.inf_ratio_outside,
                "dirichlet_factor": self.dirichlet_factor,
                "G_table": {"r": list(self.r_table[::step]), "G": list(self.G_table[::step])},
                "G_tail_verdict": self.tail_verdict}


def _radial_ratio_table(cert, ev, m, n_dir=64):
    """Minimum of φ(W)/W over each sampled radius, from 0 to far field."""
    r = np.unique(np.concatenate([
        np.linspace(0.0, m.rmax, 801)[1:],
        np.geomspace(m.rmax, TAIL_REACH * m.rmax, 1200)]))
    if m.dim == 1:
        dirs = np.array([[-1.0], [1.0]])
    else:
        th = np.linspace(0, 2 * np.pi, n_dir, endpoint=False)
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    pts = r[None, :, None] * dirs[:, None, :]
    flat = pts.reshape(-1, m.dim)
    g = ev.log_w([flat[:, k] for k in range(m.dim)])
    ratio = cert.phi.ratio_log(g).reshape(len(dirs), len(r)).min(axis=0)
    return r, ratio


def super_curve(phi_cert: LyapunovCertificate, lsp: LocalSuperPoincare, m: Measure,
                s_grid, ctx: Optional[GeneratorContext] = None) -> SuperPoincareCurve:
    """β̃(s) = c_{r0} β_loc(G⁻¹(s), s/c_{r0}), G(r) = 1/inf_{|x|>r} φ(W)/W.

    Raises
    ------
    WrongPhiRegime
        φ is not superlinear.
    GNotDecreasing
        φ(W)/W is not increasing along the sampled radii beyond r0, or G
        does not fall below the smallest requested s.
    """
    if phi_cert.phi is None or phi_cert.phi.regime_flag != "superlinear":
        raise WrongPhiRegime("super Poincare needs a superlinear phi")
    ctx = ctx or GeneratorContext(m.V)
    ev = DriftEvaluator(ctx, phi_cert.candidate)
    r0, b = phi_cert.params["r0"], phi_cert.params["b"]
    r, ratio = _radial_ratio_table(phi_cert, ev, m)
    beyond = r >= r0
    if np.any(np.diff(ratio[beyond]) < -1e-12 * np.abs(ratio[beyond][1:])):
        raise GNotDecreasing("phi(W)/W decreases along the sampled radii")
    # inf over the complement of A_r: suffix minimum over larger radii
    suffix = np.minimum.accumulate(ratio[::-1])[::-1]
    G = 1.0 / suffix
    s_grid = np.asarray(s_grid, dtype=float)
    if G[-1] > s_grid.min():
        raise GNotDecreasing(f"G only reaches {G[-1]:.3g} over the sampled radii")
    verdict = "increasing" if ratio[-1] > ratio[beyond][0] else "flat"

    g_grid = ev.log_w(m.pts)
    sup_W = float(np.exp(g_grid[m.radius <= r0].max()))
    inf_out = float(np.min(ratio[r > r0])) if np.any(r > r0) else float(ratio[-1])
    inside_grid = m.radius > r0
    if inside_grid.any():
        inf_out = min(inf_out, float(phi_cert.phi.ratio_log(g_grid[inside_grid]).min()))
    c_r0 = 1.0 + b * sup_W / inf_out
    radii = np.empty_like(s_grid)
    logb = np.empty_like(s_grid)
    for i, s in enumerate(s_grid):
        j = int(np.argmax(G <= s))
        radii[i] = r[j]
        logb[i] = math.log(c_r0) + lsp.log_beta(r[j], s / c_r0)
    beta = np.where(logb < 709.0, np.exp(np.minimum(logb, 709.0)), np.inf)
    return SuperPoincareCurve(s_grid, beta, logb, radii, c_r0, r, G, sup_W, inf_out, b,
                              tail_verdict=verdict)


def super_margins(m: Measure, curve: SuperPoincareCurve, corpus) -> list:
    """(margin, scale) of ∫f² ≤ 2s∫Γ + β̃(s)(∫|f|)² for every (f, s)."""
    out = []
    for f in corpus:
        g = m.grid_function(f)
        l2 = m.integrate(g.values ** 2)
        l1 = m.integrate(np.abs(g.values))
        dir_ = m.integrate(np.sum(g.grad ** 2, axis=0))
        for s, bt in zip(curve.s, curve.beta_tilde):
            rhs = curve.dirichlet_factor * s * dir_ + bt * l1 * l1
            out.append((rhs - l2, abs(rhs) + abs(l2)))
    return out


# --------------------------------------------------------------- curvature

@dataclass(frozen=True)
class CurvatureBound:
    delta: float
    argmin: list
    nodes: int
    rmax: float
    bounded: Optional[bool] = None
    delta_wide: Optional[float] = None

    def to_dict(self):
        return {"delta": self.delta, "argmin": list(self.argmin), "nodes": self.nodes,
                "rmax": self.rmax, "bounded_below": self.bounded,
                "delta_doubled_box": self.delta_wide}


def _min_eig(H):
    if H.shape[0] == 1:
        return H[0, 0]
    a, b, d = H[0, 0], H[0, 1], H[1, 1]
    return 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + b * b)


def _scan(V: ScalarField, pts):
    return _min_eig(V.hessian(pts))


def curvature_bound(V: ScalarField, m: Measure, check_growth: bool = True,
                    growth_tol: float = 0.05) -> CurvatureBound:
    """δ = min over grid nodes of the smallest Hessian eigenvalue of V.

    With ``check_growth`` the scan is repeated on a box twice as wide; a
    drop of more than ``growth_tol`` (relative, plus 1e-6 absolute) marks
    the Hessian as unbounded below.
    """
    lam = _scan(V, m.pts)
    i = int(np.argmin(lam))
    delta = float(lam.flat[i])
    argmin = [float(p.flat[i]) for p in m.pts]
    bounded = None
    wide = None
    if check_growth:
        n = 1024 if m.dim == 1 else 128
        ax = np.linspace(-2 * m.rmax, 2 * m.rmax, n)
        pts = list(np.meshgrid(*([ax] * m.dim), indexing="ij"))
        ax1 = np.linspace(-m.rmax, m.rmax, n)
        pts1 = list(np.meshgrid(*([ax1] * m.dim), indexing="ij"))
        d1 = float(_scan(V, pts1).min())
        wide = float(_scan(V, pts).min())
        bounded = wide >= min(d1, delta) - growth_tol * abs(min(d1, delta)) - 1e-6
    return CurvatureBound(delta, argmin, int(lam.size), m.rmax, bounded, wide)


# ----------------------------------------------------------- drift criteria

def drift_criteria(V: ScalarField, m: Measure, a: float, c: float, R: float,
                   search: bool = True) -> dict:
    """Check the two sufficient drift criteria for |x| >= R.

    1. (1-a)|∇V|² - ΔV >= c
    2. x·∇V(x) >= c|x|

    On success the matching Lyapunov search runs: criterion 1 with
    W = e^{a(V - min V)} and rate a·c, criterion 2 with W = e^{γ|x|}.
    """
    if not (0 < a < 1 and c > 0 and R > 0):
        raise ValueError("need 0 < a < 1, c > 0, R > 0")

    def crit1(p):
        g = V.gradient(p)
        return (1 - a) * np.sum(g * g, axis=0) - V.laplacian(p)

    def crit2(p):
        g = V.gradient(p)
        r = np.sqrt(sum(q * q for q in p))
        return sum(q * gk for q, gk in zip(p, g)) - c * r

    out = {"a": a, "c": c, "R": R}
    ctx = GeneratorContext(V)
    outside = m.radius >= R
    for name, fn, thresh in (("criterion1", crit1, c), ("criterion2", crit2, 0.0)):
        vals = fn(m.pts)[outside]
        slack = float(vals.min() - thresh) if vals.size else math.inf
        verdict, vmax = tail_verdict(
            lambda p: (thresh - fn(p)) / (1.0 + np.abs(fn(p))), m.dim, m.rmax, tol=0.0)
        holds = slack >= -1e-12 * max(1.0, abs(thresh)) and verdict != "fails"
        out[name] = {"holds": bool(holds), "min_slack": slack, "tail": verdict}
    out["shortcut"] = None
    if search:
        try:
            if out["criterion2"]["holds"]:
                res = search_parameters(ctx, m, "stretched-exp", "linear",
                                        {"gamma": [0.1, 0.25, 0.5, 0.75], "p": [1.0]},
                                        rates=list(np.geomspace(0.01, 1.0, 12)))
                out["shortcut"] = res.certificate
            elif out["criterion1"]["holds"]:
                res = search_parameters(ctx, m, "potential-exp", "linear", {"a": [a]},
                                        rates=list(a * c * np.linspace(0.25, 1.0, 4)))
                out["shortcut"] = res.certificate
        except NoFeasiblePoint:
            out["shortcut"] = None
    return out


# ---------------------------------------------------------------- transport

@dataclass(frozen=True)
class TransportCertificate:
    kind: str  # T2 | W1I
    lyapunov: LyapunovCertificate
    poincare: Optional[PoincareCertificate]
    claim: str

    def to_dict(self):
        return {"kind": self.kind, "lyapunov": self.lyapunov.to_dict(),
                "poincare": None if self.poincare is None else self.poincare.to_dict(),
                "claim": self.claim}


def assemble_transport(kind: str, mult_cert: LyapunovCertificate,
                       poincare: Optional[PoincareCertificate] = None) -> TransportCertificate:
    if kind == "T2":
        if mult_cert.shape != "t2":
            raise ValueError("T2 needs a t2-shaped drift certificate")
        claim = "W2(f mu, mu) <= sqrt(K H(f mu | mu)) for some finite K; no value asserted"
    elif kind == "W1I":
        if mult_cert.shape != "w1i":
            raise ValueError("W1I needs a w1i-shaped drift certificate")
        if poincare is None:
            raise MissingPoincare("W1I certificate requires a Poincare certificate")
        claim = "W1(f mu, mu) <= sqrt(C I(f mu | mu)) for some finite C; no value asserted"
    else:
        raise ValueError(f"unknown transport kind {kind!r}")
    if mult_cert.non_asymptotic:
        claim += f" [drift verified on the grid only; far-field verdict: {mult_cert.tail}]"
    return TransportCertificate(kind, mult_cert, poincare, claim)


# ---------------------------------------------------------------------- LSI

@dataclass
class LsiHypothesisReport:
    t2: Optional[TransportCertificate]
    curvature: CurvatureBound
    verdict: str  # both-hold | failed
    failing: list
    lsi_asserted: bool
    notes: list = field(default_factory=list)
    wang: Optional[dict] = None
    hwi: Optional[list] = None

    def to_dict(self):
        return {"verdict": self.verdict, "failing": list(self.failing),
                "lsi_asserted": self.lsi_asserted,
                "t2": None if self.t2 is None else self.t2.to_dict(),
                "curvature": self.curvature.to_dict(), "notes": list(self.notes),
                "wang_integrability": self.wang,
                "hwi_margins": None if self.hwi is None else [list(x) for x in self.hwi]}


def lsi_hypotheses(t2: Optional[TransportCertificate], curv: CurvatureBound) -> LsiHypothesisReport:
    """Both hypotheses: a global T2-type drift condition and Hess V >= δ."""
    failing = []
    notes = []
    if t2 is None:
        failing.append("t2-drift")
    else:
        if t2.kind != "T2":
            raise ValueError("lsi_hypotheses needs a T2 certificate")
        if t2.lyapunov.tail != "dominates":
            failing.append("t2-drift")
            notes.append(f"T2 drift holds on the grid only (far field: {t2.lyapunov.tail})")
    if not math.isfinite(curv.delta) or curv.bounded is False:
        failing.append("curvature")
        notes.append("Hessian of V is not bounded below (scan on doubled box dropped "
                     f"from {curv.delta:.4g} to {curv.delta_wide:.4g})")
    ok = not failing
    if ok:
        notes.append("LSI asserted from the hypotheses; no constant is computed")
    return LsiHypothesisReport(t2, curv, "both-hold" if ok else "failed", failing, ok, notes)


def wang_integrability(V: ScalarField, delta: float, eps: float = 0.1,
                       radii=(3.0, 4.0, 5.0, 6.0, 7.0), nodes: int = 256,
                       logZ: Optional[float] = None) -> dict:
    """Growth test for ∫ exp(((-δ)₊/2 + ε)|x|²) dμ over growing boxes.

    Returns the log of the truncated integrals and a verdict: ``diverges``
    when every increment of the log integral exceeds log 2 and increments
    are non-shrinking, ``converges`` when the last relative increment is
    below 1e-6, ``inconclusive`` otherwise.
    """
    k = max(-delta, 0.0) / 2.0 + eps
    dim = V.dim
    logs = []
    for R in radii:
        ax = np.linspace(-R, R, nodes)
        h = ax[1] - ax[0]
        w1 = np.full(nodes, h)
        w1[[0, -1]] *= 0.5
        pts = list(np.meshgrid(*([ax] * dim), indexing="ij"))
        lw = np.log(w1)
        lwt = lw if dim == 1 else lw[:, None] + lw[None, :]
        r2 = sum(p * p for p in pts)
        logs.append(float(logsumexp(lwt + k * r2 - V.value(pts))))
    logs = np.array(logs)
    if logZ is not None:
        logs = logs - logZ
    inc = np.diff(logs)
    if np.all(inc > math.log(2.0)) and np.all(np.diff(inc) >= 0):
        verdict = "diverges"
    elif abs(inc[-1]) < 1e-6:
        verdict = "converges"
    else:
        verdict = "inconclusive"
    return {"exponent": k, "radii": [float(r) for r in radii], "log_integrals": logs.tolist(),
            "verdict": verdict}


def t2_search(ctx: GeneratorContext, m: Measure, a_grid=(0.05, 0.1, 0.2, 0.3, 0.4, 0.5),
              c_grid=None, x0=None, tail_policy: str = "raise"):
    """Search the gauss-exp family for the T2 drift shape."""
    if c_grid is None:
        c_grid = list(np.geomspace(0.01, 2.0, 16))
    return search_parameters(ctx, m, "gauss-exp", "t2", {"a": list(a_grid)},
                             rates=c_grid, x0=x0, tail_policy=tail_policy)


__all__ = [
    "PoincareCertificate", "assemble_poincare", "WeightedPoincareCertificate",
    "assemble_weighted", "weighted_margins", "WeakPoincareCurve", "weak_curve",
    "weak_margins", "SuperPoincareCurve", "super_curve", "super_margins",
    "CurvatureBound", "curvature_bound", "drift_criteria", "TransportCertificate",
    "assemble_transport", "LsiHypothesisReport", "lsi_hypotheses", "wang_integrability",
    "t2_search", "RadiusMismatch", "WrongPhiRegime", "FInvertFailure", "GNotDecreasing",
    "MissingPoincare", "make_candidate", "build_measure",
]
