"""Divergence-form finite-volume discretization of -L with zero-flux
boundaries, and the eigen-solvers used on it.

For cell densities rho and face weights w (harmonic means of the two
adjacent cells), the generalized problem A u = λ diag(rho) u is symmetrized
as S = rho^{-1/2} A rho^{-1/2}.  The constant mode of A becomes the known
null vector sqrt(rho) of S, which the solvers deflate exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh, eigvalsh_tridiagonal, eigh_tridiagonal
from scipy.sparse.linalg import splu

DENSE_LIMIT = 32 * 32
LOG_RHO_FLOOR = -700.0  # keeps cell densities representable


class EigSolveFailure(RuntimeError):
    pass


@dataclass
class FVProblem:
    centers: list  # coordinate arrays of the active cells
    log_rho: np.ndarray  # unnormalized, active cells only
    S: object  # symmetric matrix (tridiagonal pair in 1D, sparse in 2D)
    null: np.ndarray  # normalized sqrt(rho)
    h: float
    index: np.ndarray = None  # 2D: flat index of each active cell


def _harm(a, b):
    return 2.0 * a * b / (a + b)


def build_1d(V, lo: float, hi: float, ncells: int) -> FVProblem:
    h = (hi - lo) / ncells
    c = lo + h * (np.arange(ncells) + 0.5)
    v = V.value([c])
    lr = np.maximum(-(v - v.min()), LOG_RHO_FLOOR)
    rho = np.exp(lr)
    w = _harm(rho[:-1], rho[1:])
    d = np.zeros(ncells)
    d[:-1] += w
    d[1:] += w
    d /= h * h * rho
    e = -w / (h * h * np.sqrt(rho[:-1] * rho[1:]))
    null = np.sqrt(rho)
    null /= np.linalg.norm(null)
    return FVProblem([c], lr, (d, e), null, h)


def build_2d(V, lo: float, hi: float, ncells: int, radius: float = None) -> FVProblem:
    h = (hi - lo) / ncells
    c1 = lo + h * (np.arange(ncells) + 0.5)
    X, Y = np.meshgrid(c1, c1, indexing="ij")
    mask = np.ones(X.shape, dtype=bool)
    if radius is not None:
        mask = X ** 2 + Y ** 2 <= radius ** 2
    idx = -np.ones(X.shape, dtype=int)
    idx[mask] = np.arange(mask.sum())
    x, y = X[mask], Y[mask]
    v = V.value([x, y])
    lr = np.maximum(-(v - v.min()), LOG_RHO_FLOOR)
    rho = np.exp(lr)
    n = x.size
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    for axis in (0, 1):
        a = idx[:-1, :] if axis == 0 else idx[:, :-1]
        b = idx[1:, :] if axis == 0 else idx[:, 1:]
        ok = (a >= 0) & (b >= 0)
        i, j = a[ok], b[ok]
        w = _harm(rho[i], rho[j]) / (h * h)
        np.add.at(diag, i, w)
        np.add.at(diag, j, w)
        off = -w / np.sqrt(rho[i] * rho[j])
        rows += [i, j]
        cols += [j, i]
        vals += [off, off]
    diag = diag / rho
    rows = np.concatenate(rows + [np.arange(n)])
    cols = np.concatenate(cols + [np.arange(n)])
    vals = np.concatenate(vals + [diag])
    S = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    null = np.sqrt(rho)
    null /= np.linalg.norm(null)
    return FVProblem([x, y], lr, S, null, h, idx)


def smallest_nonzero_1d(p: FVProblem, vector: bool = False):
    d, e = p.S
    if vector:
        w, v = eigh_tridiagonal(d, e, select="i", select_range=(0, 1))
        u = v[:, 1] - np.dot(v[:, 1], p.null) * p.null
        return float(w[1]), u / np.linalg.norm(u)
    w = eigvalsh_tridiagonal(d, e, select="i", select_range=(0, 1))
    return float(w[1])


def smallest_nonzero_2d(p: FVProblem, vector: bool = False, tol: float = 1e-11,
                        max_iter: int = 500, block: int = 3, seed: int = 0):
    """Second eigenvalue of S; dense below DENSE_LIMIT cells, otherwise
    shift-invert subspace iteration orthogonal to the null vector."""
    S = p.S
    n = S.shape[0]
    q = p.null
    if n <= DENSE_LIMIT:
        w, v = eigh(S.toarray(), subset_by_index=[0, 1])
        u = v[:, 1] - np.dot(v[:, 1], q) * q
        return (float(w[1]), u / np.linalg.norm(u)) if vector else float(w[1])
    shift = 1e-6 * float(S.diagonal().mean())
    lu = splu((S + shift * sp.identity(n, format="csr")).tocsc())
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, block))
    prev = np.inf
    for it in range(max_iter):
        X -= np.outer(q, q @ X)
        X, _ = np.linalg.qr(X)
        Y = lu.solve(X)
        Y -= np.outer(q, q @ Y)
        Y, _ = np.linalg.qr(Y)
        H = Y.T @ (S @ Y)
        H = 0.5 * (H + H.T)
        w, z = np.linalg.eigh(H)
        lam = float(w[0])
        X = Y @ z
        if abs(lam - prev) <= tol * abs(lam):
            break
        prev = lam
    else:
        raise EigSolveFailure("inverse subspace iteration did not converge")
    if vector:
        u = X[:, 0] - np.dot(X[:, 0], q) * q
        return lam, u / np.linalg.norm(u)
    return lam
