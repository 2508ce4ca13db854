"""Central finite differences with sparsity-aware column grouping."""
from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.sparse as sp

DEFAULT_STEP = np.finfo(float).eps ** (1.0 / 3.0)


class NonFiniteError(FloatingPointError):
    """An evaluator returned NaN or inf; ``where`` names the offending output."""

    def __init__(self, where: str, index=None):
        self.where = where
        self.index = index
        loc = f"{where}[{index}]" if index is not None else where
        super().__init__(f"non-finite value in {loc}")


def check_finite(values, where: str):
    arr = np.asarray(values)
    if not np.all(np.isfinite(arr)):
        bad = np.flatnonzero(~np.isfinite(arr.ravel()))
        raise NonFiniteError(where, int(bad[0]) if arr.ndim else None)
    return values


def steps(z: np.ndarray, scale: float = DEFAULT_STEP) -> np.ndarray:
    return scale * np.maximum(1.0, np.abs(z))


def color_columns(pattern) -> np.ndarray:
    """Greedy coloring of the column intersection graph of ``pattern``.

    Columns sharing a color have no row in common, so they can be perturbed
    together. Largest-degree-first ordering.
    """
    s = sp.csc_matrix(pattern, dtype=bool).astype(np.int8)
    n = s.shape[1]
    adj = (s.T @ s).tocsr()
    adj.setdiag(0)
    adj.eliminate_zeros()
    order = np.argsort(-np.diff(adj.indptr), kind="stable")
    colors = np.full(n, -1, dtype=int)
    for j in order:
        nb = adj.indices[adj.indptr[j]:adj.indptr[j + 1]]
        used = set(colors[nb][colors[nb] >= 0].tolist())
        c = 0
        while c in used:
            c += 1
        colors[j] = c
    return colors


def fd_gradient(fun: Callable[[np.ndarray], float], z, step_scale: float = DEFAULT_STEP) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    h = steps(z, step_scale)
    g = np.empty_like(z)
    for i in range(z.size):
        zp = z.copy()
        zm = z.copy()
        zp[i] += h[i]
        zm[i] -= h[i]
        g[i] = (fun(zp) - fun(zm)) / (zp[i] - zm[i])
    return check_finite(g, "objective gradient")


def fd_jacobian_dense(fun, z, m: int, step_scale: float = DEFAULT_STEP) -> np.ndarray:
    """Column-by-column central differences; the ungrouped reference."""
    z = np.asarray(z, dtype=float)
    h = steps(z, step_scale)
    jac = np.empty((m, z.size))
    for i in range(z.size):
        zp = z.copy()
        zm = z.copy()
        zp[i] += h[i]
        zm[i] -= h[i]
        jac[:, i] = (np.asarray(fun(zp)) - np.asarray(fun(zm))) / (zp[i] - zm[i])
    return check_finite(jac, "constraint jacobian")


def fd_jacobian_grouped(fun, z, pattern, colors=None, step_scale: float = DEFAULT_STEP) -> sp.csr_matrix:
    """Central-difference Jacobian of ``fun`` restricted to ``pattern``.

    Columns of one color are perturbed simultaneously; each structural
    nonzero is then read off the difference quotient of its own column.
    """
    z = np.asarray(z, dtype=float)
    pat = sp.coo_matrix(pattern)
    rows, cols = pat.row, pat.col
    if colors is None:
        colors = color_columns(pattern)
    h = steps(z, step_scale)
    vals = np.zeros(rows.size)
    for c in range(colors.max() + 1 if colors.size else 0):
        members = np.flatnonzero(colors == c)
        zp = z.copy()
        zm = z.copy()
        zp[members] += h[members]
        zm[members] -= h[members]
        diff = np.asarray(fun(zp)) - np.asarray(fun(zm))
        dz = zp - zm
        sel = colors[cols] == c
        vals[sel] = diff[rows[sel]] / dz[cols[sel]]
    check_finite(vals, "constraint jacobian")
    return sp.csr_matrix((vals, (rows, cols)), shape=pat.shape)


class HessianColoring:
    """Column groups for recovering a symmetric Hessian from gradient differences.

    Columns whose pattern is dense (e.g. free final time) get their own group;
    their rows are recovered by symmetry so they do not block grouping of
    the remaining columns.
    """

    def __init__(self, pattern, dense_threshold: int | None = None):
        s = sp.csr_matrix(pattern, dtype=bool)
        s = (s + s.T).tocsc()
        n = s.shape[0]
        self.n = n
        counts = np.diff(s.indptr)
        if dense_threshold is None:
            dense_threshold = max(30, n // 8)
        self.dense = np.flatnonzero(counts > dense_threshold)
        mask = np.ones(n, dtype=bool)
        mask[self.dense] = False
        self.sparse_cols = np.flatnonzero(mask)
        sub = s[mask][:, mask]
        colors = np.full(n, -1, dtype=int)
        if self.sparse_cols.size:
            colors[mask] = color_columns(sub)
        base = colors.max() + 1
        colors[self.dense] = base + np.arange(self.dense.size)
        self.colors = colors
        self.n_groups = int(colors.max() + 1) if n else 0
        coo = s.tocoo()
        keep = mask[coo.row] & mask[coo.col]
        self.rows_a, self.cols_a = coo.row[keep], coo.col[keep]
        dmask = ~mask
        keep_b = dmask[coo.col]
        self.rows_b, self.cols_b = coo.row[keep_b], coo.col[keep_b]
        self.is_dense = dmask


def fd_hessian(grad: Callable[[np.ndarray], np.ndarray], z, coloring: HessianColoring,
               step_scale: float = DEFAULT_STEP ** 0.75) -> sp.csr_matrix:
    """Symmetric sparse Hessian by central differences of ``grad``."""
    z = np.asarray(z, dtype=float)
    n = coloring.n
    h = steps(z, step_scale)
    colors = coloring.colors
    diffs = {}
    for c in range(coloring.n_groups):
        members = np.flatnonzero(colors == c)
        zp = z.copy()
        zm = z.copy()
        zp[members] += h[members]
        zm[members] -= h[members]
        diffs[c] = (np.asarray(grad(zp)) - np.asarray(grad(zm))), zp - zm
    ra, ca = coloring.rows_a, coloring.cols_a
    va = np.empty(ra.size)
    rb, cb = coloring.rows_b, coloring.cols_b
    vb = np.empty(rb.size)
    for c, (dg, dz) in diffs.items():
        sel = colors[ca] == c
        va[sel] = dg[ra[sel]] / dz[ca[sel]]
        selb = colors[cb] == c
        vb[selb] = dg[rb[selb]] / dz[cb[selb]]
    a = sp.csr_matrix((va, (ra, ca)), shape=(n, n))
    b = sp.csr_matrix((vb, (rb, cb)), shape=(n, n))
    dd = coloring.is_dense
    b_dd = sp.csr_matrix((vb[dd[rb]], (rb[dd[rb]], cb[dd[rb]])), shape=(n, n))
    hess = 0.5 * (a + a.T) + b + b.T - 0.5 * (b_dd + b_dd.T)
    hess = hess.tocsr()
    check_finite(hess.data, "lagrangian hessian")
    return hess
