"""Independent numerical ground truth: spectral gaps, 1D Wasserstein
distances, entropy and Fisher information, and direct audits of the
certified inequalities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator, RectBivariateSpline

from . import expr as E
from . import fv
from .expr import Const, Expr, ScalarField, Var
from .measure import (GridFunction, Measure, NotNormalized, _inverse_cdf, build_measure,
                      functionals)

SPECTRAL_GATE = 0.02
TRANSPORT_GATE = 0.01
QUADRATURE_GATE = 0.005
MARGIN_TOL = 1e-8
SPECTRAL_CUT = 46.0  # box keeps nodes with V - min V below this (mass beyond ~1e-20)


class ConvergenceFailure(RuntimeError):
    pass


@dataclass
class OracleReport:
    """Oracle output; every quantity carries its refinement delta."""

    kind: str
    quantities: dict
    resolutions: dict
    deltas: dict
    gate: float
    margins: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def gated(self) -> bool:
        return all(d < self.gate for d in self.deltas.values() if math.isfinite(d))

    @property
    def margins_ok(self) -> bool:
        return all(a >= -MARGIN_TOL * s for a, s in self.margins if not math.isnan(a))

    @property
    def passed(self) -> bool:
        return self.gated and self.margins_ok

    def to_dict(self):
        return {"kind": self.kind, "quantities": self.quantities,
                "resolutions": self.resolutions, "deltas": self.deltas, "gate": self.gate,
                "gated": self.gated, "margins_ok": self.margins_ok,
                "margins": [list(x) for x in self.margins], "notes": list(self.notes)}


# ------------------------------------------------------------ spectral gap

def spectral_box(m: Measure, cut: float = SPECTRAL_CUT) -> float:
    """Half-width of the box where V - min V <= ``cut``, capped at rmax."""
    keep = m.Vvals - m.Vvals.min() <= cut
    far = np.max(np.abs(np.stack(m.pts)), axis=0)
    return float(min(m.rmax, far[keep].max() * 1.05))


def _gap(m: Measure, n: int, vector: bool):
    R = spectral_box(m)
    if m.dim == 1:
        p = fv.build_1d(m.V, -R, R, n)
        return p, fv.smallest_nonzero_1d(p, vector)
    p = fv.build_2d(m.V, -R, R, n)
    return p, fv.smallest_nonzero_2d(p, vector)


def spectral_gap(m: Measure, nodes: Optional[int] = None,
                 eigenfunction: bool = False) -> OracleReport:
    """λ₁ of -L on a box with zero-flux faces, at ``nodes`` and 2·nodes
    cells per axis; the finer value is reported.  The box is the part of
    the grid where the density exceeds e^{-46} of its peak (see
    ``spectral_box``).

    With ``eigenfunction`` the finer eigenvector is returned as a spline
    GridFunction on the measure grid, under ``quantities["eigenfunction"]``.
    """
    if m.dim not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    if nodes is None:
        nodes = 2048 if m.dim == 1 else 64
    try:
        _, lc = _gap(m, nodes, False)
        p, out = _gap(m, 2 * nodes, eigenfunction)
    except fv.EigSolveFailure as exc:
        raise ConvergenceFailure(str(exc)) from exc
    lf, u = (out if eigenfunction else (out, None))
    delta = abs(lc - lf) / abs(lf)
    q = {"lambda1": lf, "lambda1_coarse": lc, "poincare_constant": 1.0 / lf}
    q["box_halfwidth"] = spectral_box(m)
    rep = OracleReport("spectral_gap", q, {"coarse": nodes, "fine": 2 * nodes},
                       {"lambda1": delta}, SPECTRAL_GATE)
    if eigenfunction:
        phi = u * np.exp(-0.5 * p.log_rho)
        q["eigenfunction"] = _spline_grid_function(m, p, phi)
    return rep


def _spline_grid_function(m: Measure, p, phi) -> GridFunction:
    if m.dim == 1:
        cs = CubicSpline(p.centers[0], phi)
        x = m.pts[0]
        return GridFunction(cs(x), cs(x, 1)[None, :])
    n = int(round(math.sqrt(phi.size)))
    c = p.centers[0].reshape(n, n)[:, 0]
    sp = RectBivariateSpline(c, c, phi.reshape(n, n), kx=3, ky=3)
    x, y = m.pts[0].ravel(), m.pts[1].ravel()
    val = sp.ev(x, y).reshape(m.shape)
    gx = sp.ev(x, y, dx=1).reshape(m.shape)
    gy = sp.ev(x, y, dy=1).reshape(m.shape)
    return GridFunction(val, np.stack([gx, gy]))


# --------------------------------------------------------------- transport

def _cumulative(m: Measure, dens):
    ax = m.axes[0]
    g = dens * ax.jac
    inc = 0.5 * (g[1:] + g[:-1]) * ax.t_step
    left = np.concatenate([[0.0], np.cumsum(inc)])
    right = np.concatenate([np.cumsum(inc[::-1])[::-1], [0.0]])
    return left / left[-1], right / left[-1]


def _density_values(m: Measure, f) -> np.ndarray:
    v = m.grid_function(f).values if isinstance(f, (Expr, ScalarField, GridFunction)) \
        else m.values(f)
    if np.any(v < 0):
        raise ValueError("density takes negative values")
    tot = m.integrate(v)
    if not tot > 0 or abs(tot - 1.0) > 1e-6:
        raise NotNormalized(f"density integrates to {tot:.8g}")
    return v / tot


def transport_map(m: Measure, f) -> np.ndarray:
    """T = Q_ν ∘ F_μ at the nodes, ν = f μ."""
    if m.dim != 1:
        raise ValueError("transport is only available in 1D")
    v = _density_values(m, f)
    Fm, Sm = m.cdf, m.sf
    Fn, Sn = _cumulative(m, v * m.density)
    x = m.axes[0].nodes
    u = np.clip(Fm, 1e-300, 1.0)
    T = np.empty_like(x)
    lo = Fm <= 0.5
    T[lo] = _inverse_cdf(x, Fn, Sn, u[lo])
    # above the median invert through survival functions for accuracy
    s = np.unique(Sn[::-1], return_index=True)
    T[~lo] = PchipInterpolator(s[0], x[::-1][s[1]])(Sm[~lo])
    return T


def _coarse(m: Measure) -> Measure:
    """Same measure with half the nodes, for refinement deltas."""
    return build_measure(m.V, m.rmax, m.nodes // 2, m.log_refine, boundary_tol=math.inf)


def _wp(m: Measure, f, p: int) -> float:
    T = transport_map(m, f)
    return m.integrate(np.abs(T - m.axes[0].nodes) ** p) ** (1.0 / p)


def wasserstein_1d(m: Measure, f, p: int = 2) -> OracleReport:
    """W_p(fμ, μ) through the monotone (quantile) coupling.

    The refinement delta compares against a measure with half the nodes.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    w = _wp(m, f, p)
    mc = _coarse(m)
    wc = _wp(mc, f, p)
    delta = abs(w - wc) / max(abs(w), 1e-12) if w > 1e-10 else abs(w - wc)
    return OracleReport(f"W{p}", {f"W{p}": w, f"W{p}_coarse": wc},
                        {"coarse": mc.nodes, "fine": m.nodes}, {f"W{p}": delta},
                        TRANSPORT_GATE)


def coupling_cost(m: Measure, f, perm_seed: int, bins: int = 400, swaps: int = 20,
                  p: int = 2) -> tuple:
    """(quantile cost, perturbed-coupling cost) of W_p^p on equal-mass bins.

    The perturbed coupling pairs μ-bin i with ν-bin σ(i) for a random
    permutation σ built from ``swaps`` transpositions; it is feasible for
    the binned marginals, so its cost is never below the monotone one.
    """
    v = _density_values(m, f)
    x = m.axes[0].nodes
    Fn, Sn = _cumulative(m, v * m.density)
    u = (np.arange(bins) + 0.5) / bins
    qm = m.quantile(u)
    qn = _inverse_cdf(x, Fn, Sn, u)
    rng = np.random.default_rng(perm_seed)
    perm = np.arange(bins)
    for _ in range(swaps):
        i, j = rng.integers(bins, size=2)
        perm[[i, j]] = perm[[j, i]]
    mono = float(np.mean(np.abs(qn - qm) ** p))
    pert = float(np.mean(np.abs(qn[perm] - qm) ** p))
    return mono, pert


# -------------------------------------------------------- density families

def substitute(e: Expr, i: int, repl: Expr) -> Expr:
    """Replace the variable x_{i+1} by ``repl``."""
    if isinstance(e, Var):
        return repl if e.index == i else e
    if isinstance(e, E.R2):
        parts = [Var(k) if k != i else repl for k in range(e.dim)]
        out = parts[0] * parts[0]
        for q in parts[1:]:
            out = out + q * q
        return out
    if isinstance(e, E.Neg):
        return E.neg(substitute(e.arg, i, repl))
    if isinstance(e, E.BinOp):
        a, b = substitute(e.left, i, repl), substitute(e.right, i, repl)
        return {"+": E.add, "-": E.sub, "*": E.mul, "/": E.div, "^": E.power}[e.op](a, b)
    if isinstance(e, E.Call):
        return E.call(e.name, *[substitute(a, i, repl) for a in e.args])
    return e


@dataclass(frozen=True)
class DensityFamily:
    """Finite list of (label, density wrt μ) pairs; densities normalized on
    the grid when used."""

    members: tuple

    def __iter__(self):
        return iter(self.members)

    def __len__(self):
        return len(self.members)


def _normalized(m: Measure, e: Expr) -> Expr:
    z = m.integrate(ScalarField(e, m.dim).value(m.pts))
    return E.mul(Const(1.0 / z), e) if abs(z - 1.0) > 0 else e


def translate_family(m: Measure, shifts) -> DensityFamily:
    """f = e^{V(x) - V(x - m)}: the law of X + m for X ~ μ (1D)."""
    V = m.V.expr
    out = []
    for s in shifts:
        if s == 0:
            out.append((f"translate({s:g})", Const(1.0)))
            continue
        sh = substitute(V, 0, E.sub(Var(0), Const(float(s))))
        out.append((f"translate({s:g})", _normalized(m, E.call("exp", E.sub(V, sh)))))
    return DensityFamily(tuple(out))


def tilt_family(m: Measure, thetas) -> DensityFamily:
    return DensityFamily(tuple(
        (f"tilt({t:g})", _normalized(m, E.call("exp", Const(float(t)) * Var(0))))
        for t in thetas))


def scaling_family(m: Measure, scales) -> DensityFamily:
    """Law of λX: f = e^{V(x) - V(x/λ)}/λ, renormalized on the grid."""
    V = m.V.expr
    out = []
    for lam in scales:
        sh = substitute(V, 0, E.div(Var(0), Const(float(lam))))
        out.append((f"scale({lam:g})", _normalized(m, E.call("exp", E.sub(V, sh)))))
    return DensityFamily(tuple(out))


def bump_family(m: Measure, centers, width: float = 0.5, weight: float = 0.5) -> DensityFamily:
    out = []
    for c in centers:
        bump = E.call("exp", E.neg((Var(0) - Const(float(c))) ** Const(2.0)
                                   / Const(2 * width * width)))
        out.append((f"bump({c:g})", _normalized(m, Const(1.0 - weight) + Const(weight) * bump)))
    return DensityFamily(tuple(out))


def default_family(m: Measure) -> DensityFamily:
    parts = [translate_family(m, (0.1, 0.3, 1.0, -0.5)), tilt_family(m, (0.2, -0.7)),
             scaling_family(m, (0.7, 1.3)), bump_family(m, (0.0, 1.0))]
    return DensityFamily(tuple(x for fam in parts for x in fam))


# ------------------------------------------------------------------ audits

def audit_poincare(m: Measure, C: float, corpus) -> OracleReport:
    """Margins C∫Γ(f)dμ - Var(f) per corpus member."""
    margins = []
    for f in corpus:
        g = m.grid_function(f)
        mean = m.integrate(g.values)
        var = max(0.0, m.integrate((g.values - mean) ** 2))
        rhs = C * m.integrate(np.sum(g.grad ** 2, axis=0))
        margins.append((rhs - var, abs(rhs) + abs(var)))
    return OracleReport("poincare_audit", {"C": C}, {"nodes": m.nodes}, {}, QUADRATURE_GATE,
                        margins)


def _member_table(m: Measure, family: DensityFamily, need: str):
    rows, excluded = [], []
    mc = None
    for label, f in family:
        fn = functionals(m, f)
        val = fn.entropy if need == "H" else fn.fisher
        if not val > 1e-14:
            excluded.append(label)
            continue
        w1 = _wp(m, f, 1)
        w2 = _wp(m, f, 2)
        if mc is None:
            mc = _coarse(m)
        fc = functionals(mc, f)
        valc = fc.entropy if need == "H" else fc.fisher
        rows.append({"member": label, "H": fn.entropy, "I": fn.fisher, "W1": w1, "W2": w2,
                     "quad_delta": abs(val - valc) / val})
    return rows, excluded


def audit_transport(m: Measure, family: DensityFamily, kind: str) -> OracleReport:
    """Empirical constant sup W₂²/H (T2) or sup W₁²/I (W1I) over ``family``.

    The value is a lower bound for the best constant, never the constant.
    """
    if m.dim != 1:
        raise ValueError("transport audits are 1D")
    if kind not in ("T2", "W1I"):
        raise ValueError(f"unknown kind {kind!r}")
    need = "H" if kind == "T2" else "I"
    rows, excluded = _member_table(m, family, need)
    for r in rows:
        r["ratio"] = r["W2"] ** 2 / r["H"] if kind == "T2" else r["W1"] ** 2 / r["I"]
    sup = max((r["ratio"] for r in rows), default=math.nan)
    deltas = {"quadrature": max((r["quad_delta"] for r in rows), default=0.0)}
    rep = OracleReport(f"transport_{kind}", {"empirical_constant": sup, "members": rows,
                                             "excluded": excluded},
                       {"nodes": m.nodes}, deltas, QUADRATURE_GATE)
    rep.notes.append("empirical constant is a lower bound over a finite family")
    return rep


def audit_hwi(m: Measure, delta: float, family: DensityFamily) -> OracleReport:
    """Margins 2√I·W₂ - (δ/2)W₂² - H per member."""
    margins, rows = [], []
    for label, f in family:
        fn = functionals(m, f)
        w2 = _wp(m, f, 2)
        rhs = 2.0 * math.sqrt(fn.fisher) * w2 - 0.5 * delta * w2 * w2
        margins.append((rhs - fn.entropy, abs(rhs) + abs(fn.entropy)))
        rows.append({"member": label, "H": fn.entropy, "I": fn.fisher, "W2": w2,
                     "margin": rhs - fn.entropy})
    return OracleReport("hwi_audit", {"delta": delta, "members": rows}, {"nodes": m.nodes},
                        {}, QUADRATURE_GATE, margins)


def audit_superpoincare(m: Measure, curve, corpus) -> OracleReport:
    from .certificates import super_margins
    margins = super_margins(m, curve, corpus)
    q = {"s": list(curve.s), "min_beta_tilde": float(np.min(curve.beta_tilde))}
    rep = OracleReport("super_poincare_audit", q, {"nodes": m.nodes}, {}, QUADRATURE_GATE,
                       margins)
    if np.any(curve.beta_tilde < 1.0):
        rep.notes.append("beta_tilde below 1: the constant function violates it")
    return rep


def audit_weakpoincare(m: Measure, curve, corpus) -> OracleReport:
    from .certificates import weak_margins
    margins = weak_margins(m, curve, corpus)
    return OracleReport("weak_poincare_audit", {"s": list(curve.s)}, {"nodes": m.nodes},
                        {}, QUADRATURE_GATE, margins)


def audit_weighted(m: Measure, cert, corpus) -> OracleReport:
    from .certificates import weighted_margins
    margins = weighted_margins(m, cert, corpus)
    return OracleReport(f"{cert.direction}_poincare_audit", {"constant": cert.constant},
                        {"nodes": m.nodes}, {}, QUADRATURE_GATE, margins)


__all__ = [
    "OracleReport", "ConvergenceFailure", "spectral_gap", "wasserstein_1d",
    "transport_map", "coupling_cost", "substitute", "DensityFamily", "translate_family",
    "tilt_family", "scaling_family", "bump_family", "default_family", "audit_poincare",
    "audit_transport", "audit_hwi", "audit_superpoincare", "audit_weakpoincare",
    "audit_weighted",
]
