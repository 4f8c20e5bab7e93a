"""Boltzmann measures mu ~ exp(-V) on a truncated tensor grid."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.interpolate import PchipInterpolator

from .expr import Expr, ScalarField, evaluate, parse_potential

TOL_NORM = 1e-8
BOUNDARY_TOL = 1e-12
FUNCTIONAL_TOL = 1e-6
NEGLIGIBLE = 1e-30


class NonIntegrable(ValueError):
    pass


class DegenerateGrid(ValueError):
    pass


class NotNormalized(ValueError):
    pass


class NegativeDensity(ValueError):
    pass


class SamplerTuningError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridFunction:
    """Values and gradient of a test function at the nodes of a measure."""

    values: np.ndarray
    grad: np.ndarray  # shape (dim, *grid)

    def __mul__(self, other: "GridFunction") -> "GridFunction":
        return GridFunction(
            self.values * other.values,
            self.grad * other.values + self.values * other.grad,
        )

    def scale(self, c: float) -> "GridFunction":
        return GridFunction(self.values * c, self.grad * c)

    def shift(self, c: float) -> "GridFunction":
        return GridFunction(self.values + c, self.grad)


@dataclass
class Axis:
    nodes: np.ndarray
    weights: np.ndarray  # trapezoid weights in x
    t_step: float
    jac: np.ndarray  # dx/dt at the nodes


def _axis(rmax: float, nodes: int, log_refine: bool, scale: float = 1.0) -> Axis:
    if log_refine:
        # x = scale * sinh(t), trapezoid in t; nodes cluster near 0
        tmax = math.asinh(rmax / scale)
        t = np.linspace(-tmax, tmax, nodes)
        x = scale * np.sinh(t)
        jac = scale * np.cosh(t)
        x[0], x[-1] = -rmax, rmax
    else:
        t = np.linspace(-rmax, rmax, nodes)
        x = t
        jac = np.ones(nodes)
    h = t[1] - t[0]
    w = h * jac
    w[0] *= 0.5
    w[-1] *= 0.5
    return Axis(x, w, h, jac)


@dataclass
class Measure:
    """Normalized mu on the box [-rmax, rmax]^dim.

    ``mass`` holds the quadrature mass of every node and sums to one.  The
    estimated mass lost by truncation, relative to the full-space measure,
    is ``tail_fraction``.
    """

    V: ScalarField
    dim: int
    rmax: float
    nodes: int
    log_refine: bool
    axes: list
    pts: list
    weights: np.ndarray
    Vvals: np.ndarray
    logZ: float
    density: np.ndarray
    mass: np.ndarray
    tail_fraction: float
    _cdf: Optional[np.ndarray] = field(default=None, repr=False)
    _sf: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def Z(self) -> float:
        return math.exp(self.logZ)

    @property
    def radius(self) -> np.ndarray:
        return np.sqrt(sum(p * p for p in self.pts))

    @property
    def shape(self):
        return self.weights.shape

    # ------------------------------------------------------------ fields
    def values(self, g) -> np.ndarray:
        """Node values of an Expr, ScalarField, callable or array."""
        if isinstance(g, ScalarField):
            return g.value(self.pts)
        if isinstance(g, Expr):
            return evaluate(g, self.pts)
        if callable(g):
            return np.broadcast_to(np.asarray(g(self.pts), dtype=float), self.shape)
        return np.broadcast_to(np.asarray(g, dtype=float), self.shape)

    def grid_function(self, f: Union[str, Expr, ScalarField, GridFunction]) -> GridFunction:
        if isinstance(f, GridFunction):
            return f
        if isinstance(f, str):
            f = parse_potential(f, self.dim)
        if isinstance(f, Expr):
            f = ScalarField(f, self.dim)
        return GridFunction(f.value(self.pts), f.gradient(self.pts))

    # -------------------------------------------------------- quadrature
    def integrate(self, g) -> float:
        vals = self.values(g)
        bad = ~np.isfinite(vals)
        if bad.any():
            idx = tuple(np.argwhere(bad)[0])
            loc = [float(p[idx]) for p in self.pts]
            raise FloatingPointError(f"integrand not finite at node {loc}")
        return float(np.sum(self.mass * vals))

    def integrate_lebesgue(self, g) -> float:
        return float(np.sum(self.weights * self.values(g)))

    def tail_mass(self, r: float) -> float:
        """mu(|x| > r) for the truncated, normalized measure."""
        if r < 0 or r > self.rmax * (1 + 1e-12):
            raise ValueError("r must lie in [0, rmax]")
        if self.dim == 1:
            inside = self._interp_cdf(r) - self._interp_cdf(-r)
            return float(min(1.0, max(0.0, 1.0 - inside)))
        return float(min(1.0, np.sum(self.mass[self.radius > r])))

    def ball_mass(self, r: float) -> float:
        return float(np.sum(self.mass[self.radius <= r]))

    # ---------------------------------------------------------- 1D cdf
    def _cumulative(self):
        ax = self.axes[0]
        f = self.density * ax.jac
        inc = 0.5 * (f[1:] + f[:-1]) * ax.t_step
        left = np.concatenate([[0.0], np.cumsum(inc)])
        right = np.concatenate([np.cumsum(inc[::-1])[::-1], [0.0]])
        total = left[-1]
        return left / total, right / total

    @property
    def cdf(self) -> np.ndarray:
        if self.dim != 1:
            raise ValueError("cdf is only defined for dim=1")
        if self._cdf is None:
            self._cdf, self._sf = self._cumulative()
        return self._cdf

    @property
    def sf(self) -> np.ndarray:
        self.cdf
        return self._sf

    def _interp_cdf(self, x):
        return np.interp(x, self.axes[0].nodes, self.cdf)

    def quantile(self, u):
        """Inverse cdf (1D only), monotone in ``u``."""
        if self.dim != 1:
            raise ValueError("quantile is only defined for dim=1")
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0) | (u >= 1)):
            raise ValueError("u must lie in (0, 1)")
        return _inverse_cdf(self.axes[0].nodes, self.cdf, self.sf, u)


def _inverse_cdf(x, cdf, sf, u):
    """Quantiles using the left cdf below the median and the sf above it."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    lo = u <= 0.5
    c, idx = np.unique(cdf, return_index=True)
    out[lo] = PchipInterpolator(c, x[idx])(u[lo]) if lo.any() else out[lo]
    s_rev = sf[::-1]
    s, idx2 = np.unique(s_rev, return_index=True)
    xr = x[::-1][idx2]
    if (~lo).any():
        out[~lo] = PchipInterpolator(s, xr)(1.0 - u[~lo])
    return out


def build_measure(
    V: ScalarField,
    rmax: float,
    nodes: int,
    log_refine: bool = False,
    tail_exponent: Optional[float] = None,
    boundary_tol: float = BOUNDARY_TOL,
    refine_scale: float = 1.0,
    compact: bool = False,
) -> Measure:
    """Normalize exp(-V) on [-rmax, rmax]^dim.

    Parameters
    ----------
    V : ScalarField
        Potential, dimension 1 or 2.
    rmax : float
        Half-width of the box.
    nodes : int
        Nodes per axis (at least 16).  An even count keeps the origin off
        the grid, which potentials built on ``theta`` need.
    log_refine : bool
        Use a sinh-mapped axis so heavy tails can reach large ``rmax``.
    tail_exponent : float, optional
        Known power-law decay exponent of the density.  Supplying it waives
        the boundary-density test and is used for the truncated-mass
        estimate.
    compact : bool
        The measure is supported on the box itself (e.g. the uniform law
        on an interval); the truncation checks are skipped.

    Raises
    ------
    NonIntegrable
        Boundary density is too large relative to the peak and no tail
        exponent was supplied, or the estimated tail mass is infinite.
    DegenerateGrid
        Fewer than 16 nodes per axis.
    """
    if nodes < 16:
        raise DegenerateGrid(f"need at least 16 nodes per axis, got {nodes}")
    if V.dim not in (1, 2):
        raise ValueError("only dimensions 1 and 2 are supported")
    dim = V.dim
    axes = [_axis(rmax, nodes, log_refine, refine_scale) for _ in range(dim)]
    pts = list(np.meshgrid(*[a.nodes for a in axes], indexing="ij"))
    weights = axes[0].weights
    for a in axes[1:]:
        weights = np.multiply.outer(weights, a.weights)
    Vv = V.value(pts)
    vmin = float(Vv.min())
    rel = np.exp(-(Vv - vmin))
    Zs = float(np.sum(weights * rel))
    logZ = -vmin + math.log(Zs)
    density = np.exp(-Vv - logZ)
    mass = weights * density
    mass /= mass.sum()

    bmask = np.zeros(Vv.shape, dtype=bool)
    for k in range(dim):
        sl = [slice(None)] * dim
        sl[k] = 0
        bmask[tuple(sl)] = True
        sl[k] = -1
        bmask[tuple(sl)] = True
    if compact:
        # mu lives on the box itself: nothing is truncated
        for arr in (weights, Vv, density, mass):
            arr.setflags(write=False)
        return Measure(V, dim, float(rmax), nodes, log_refine, axes, pts, weights,
                       Vv, logZ, density, mass, 0.0)
    peak = float(rel.max())
    bmax = float(rel[bmask].max())
    if tail_exponent is None and bmax > boundary_tol * peak:
        raise NonIntegrable(
            f"boundary density ratio {bmax / peak:.3e} exceeds {boundary_tol:.1e}; "
            "enlarge rmax or supply a tail exponent"
        )
    tail = _tail_estimate(V, pts, density, bmask, rmax, axes, tail_exponent)
    if not math.isfinite(tail):
        raise NonIntegrable("estimated truncated tail mass is infinite")
    tail_fraction = tail / (1.0 + tail)
    for arr in (weights, Vv, density, mass):
        arr.setflags(write=False)
    return Measure(V, dim, float(rmax), nodes, log_refine, axes, pts, weights,
                   Vv, logZ, density, mass, float(tail_fraction))


def _tail_estimate(V, pts, density, bmask, rmax, axes, tail_exponent):
    # power-law extrapolation outward from each boundary node with the
    # radial log-derivative x.grad V; for exponential tails it is large and the
    # estimate reduces to rho / |V'|
    dim = len(pts)
    total = 0.0
    for k in range(dim):
        for end in (0, -1):
            sl = [slice(None)] * dim
            sl[k] = end
            sl = tuple(sl)
            rho = density[sl]
            if tail_exponent is not None:
                a = np.full(rho.shape, float(tail_exponent))
            else:
                g = V.gradient([p[sl] for p in pts])
                a = np.abs(sum(p[sl] * gk for p, gk in zip(pts, g)))
            excess = a - 1.0
            # nodes far below the peak cannot carry tail mass at this scale
            live = rho > NEGLIGIBLE * float(density.max())
            if np.any((excess <= 0) & live):
                return math.inf
            rho = np.where(live, rho, 0.0)
            ds = axes[1 - k].weights if dim == 2 else 1.0
            with np.errstate(divide="ignore", invalid="ignore"):
                total += float(np.sum(np.where(rho > 0, rho * rmax / excess * ds, 0.0)))
    return total


# ------------------------------------------------------------- functionals

@dataclass(frozen=True)
class Functionals:
    variance: float
    entropy: float
    fisher: float
    osc: float


def normalize_density(m: Measure, f: GridFunction, tol: float = FUNCTIONAL_TOL) -> GridFunction:
    if np.any(f.values < 0):
        raise NegativeDensity("density takes negative values on the grid")
    total = float(np.sum(m.mass * f.values))
    if abs(total - 1.0) > tol:
        raise NotNormalized(f"density integrates to {total!r}")
    return f.scale(1.0 / total)


def functionals(m: Measure, f, density: bool = True, tol: float = FUNCTIONAL_TOL) -> Functionals:
    """Variance, entropy, Fisher information and oscillation of ``f``.

    With ``density`` set, ``f`` must be a probability density with respect
    to ``m`` (up to ``tol``); it is renormalized on the grid before the
    entropy and Fisher information are computed.  Otherwise those two are
    reported as NaN.
    """
    g = m.grid_function(f)
    mean = float(np.sum(m.mass * g.values))
    var = max(0.0, float(np.sum(m.mass * (g.values - mean) ** 2)))
    osc = float(g.values.max() - g.values.min())
    if not density:
        return Functionals(var, math.nan, math.nan, osc)
    g = normalize_density(m, g, tol)
    v = g.values
    with np.errstate(divide="ignore", invalid="ignore"):
        flogf = np.where(v > 0, v * np.log(np.where(v > 0, v, 1.0)), 0.0)
        gsq = np.sum(g.grad ** 2, axis=0)
        fish = np.where(v > 0, gsq / np.where(v > 0, v, 1.0), 0.0)
    ent = max(0.0, float(np.sum(m.mass * flogf)))
    fisher = float(np.sum(m.mass * fish))
    return Functionals(var, ent, fisher, osc)


# ---------------------------------------------------------------- sampling

@dataclass
class SampleResult:
    points: np.ndarray  # (count, dim)
    acceptance: Optional[float] = None
    step: Optional[float] = None


def sample(m: Measure, count: int, seed: int, chains: int = 200,
           burn_in: int = 400) -> SampleResult:
    """Draw ``count`` points from ``m``.

    1D uses inverse-cdf sampling.  2D runs ``chains`` random-walk Metropolis
    chains in lockstep; the step is tuned during burn-in toward an
    acceptance rate in [0.3, 0.5].

    Raises
    ------
    SamplerTuningError
        Final 2D acceptance rate outside [0.1, 0.9].
    """
    rng = np.random.default_rng(seed)
    if m.dim == 1:
        u = rng.uniform(0.0, 1.0, size=count)
        u = np.clip(u, 1e-15, 1 - 1e-15)
        return SampleResult(m.quantile(u)[:, None])
    if m.dim != 2:
        raise ValueError("sampling supports dim 1 and 2 only")
    chains = min(chains, count)
    idx = np.unravel_index(np.argmax(m.density), m.shape)
    x = np.tile([p[idx] for p in m.pts], (chains, 1)).astype(float)
    x += rng.normal(scale=0.1, size=x.shape)
    V = m.V

    def logp(z):
        return -V.value([z[:, 0], z[:, 1]])

    lp = logp(x)
    step = 1.0
    for it in range(burn_in):
        prop = x + step * rng.normal(size=x.shape)
        lq = logp(prop)
        acc = np.log(rng.uniform(size=chains)) < lq - lp
        x[acc], lp[acc] = prop[acc], lq[acc]
        rate = acc.mean()
        if it % 20 == 19 or rate < 0.05:
            if rate < 0.3:
                step *= 0.8
            elif rate > 0.5:
                step *= 1.25
    per_chain = -(-count // chains)
    out = np.empty((per_chain, chains, 2))
    accepted = 0
    for k in range(per_chain):
        prop = x + step * rng.normal(size=x.shape)
        lq = logp(prop)
        acc = np.log(rng.uniform(size=chains)) < lq - lp
        x[acc], lp[acc] = prop[acc], lq[acc]
        accepted += int(acc.sum())
        out[k] = x
    rate = accepted / (per_chain * chains)
    if not 0.1 <= rate <= 0.9:
        raise SamplerTuningError(f"acceptance rate {rate:.3f} outside [0.1, 0.9]")
    pts = out.reshape(-1, 2)[:count]
    return SampleResult(pts, rate, step)
