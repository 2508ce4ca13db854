"""Legendre-Gauss-Radau nodes, weights, Lagrange bases and the
differentiation/integration matrices used by the collocation code.

All arrays returned here are fresh numpy arrays; nothing is cached in a
mutable way, so results can be shared freely between threads.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_DEGREE = 64


@dataclass(frozen=True)
class LgrRule:
    """``degree`` LGR nodes on [-1, 1) (first node -1) and their weights."""

    degree: int
    nodes: np.ndarray
    weights: np.ndarray


@dataclass(frozen=True)
class IntervalGrid:
    """Collocation points of one mesh interval plus its non-collocated endpoint."""

    left: float
    right: float
    colloc_pts: np.ndarray

    @property
    def endpoint(self) -> float:
        return self.right

    @property
    def support(self) -> np.ndarray:
        return np.append(self.colloc_pts, self.right)

    @classmethod
    def from_rule(cls, rule: LgrRule, left: float, right: float) -> "IntervalGrid":
        if not right > left:
            raise ValueError(f"interval must have left < right, got [{left}, {right}]")
        pts = left + (rule.nodes + 1.0) * (0.5 * (right - left))
        pts[0] = left
        return cls(float(left), float(right), pts)


def _legendre_pair(n: int, x: np.ndarray):
    """Return P_{n-1}, P_n and their derivatives at ``x`` by recurrence (n >= 1)."""
    p_prev = np.ones_like(x)
    p = x.copy()
    dp_prev = np.zeros_like(x)
    dp = np.ones_like(x)
    for k in range(1, n):
        p_next = ((2 * k + 1) * x * p - k * p_prev) / (k + 1)
        dp_next = dp_prev + (2 * k + 1) * p
        p_prev, p = p, p_next
        dp_prev, dp = dp, dp_next
    return p_prev, p, dp_prev, dp


@lru_cache(maxsize=None)
def _lgr_arrays(n: int):
    if n == 1:
        return (np.array([-1.0]), np.array([2.0]))
    # Interior nodes are the zeros of the Jacobi polynomial P^{(0,1)}_{n-1};
    # Golub-Welsch on its three-term recurrence, then Newton on P_{n-1}+P_n.
    k = np.arange(n - 1, dtype=float)
    diag = 1.0 / ((2 * k + 1) * (2 * k + 3))
    j = np.arange(1, n - 1, dtype=float)
    off = np.sqrt(j * (j + 1)) / (2 * j + 1)
    jac = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    x = np.sort(np.linalg.eigvalsh(jac))
    for _ in range(20):
        pm1, pn, dpm1, dpn = _legendre_pair(n, x)
        step = (pm1 + pn) / (dpm1 + dpn)
        x = x - step
        if np.max(np.abs(step)) < 1e-16:
            break
    nodes = np.concatenate(([-1.0], x))
    pm1, _, _, _ = _legendre_pair(n, nodes)
    weights = (1.0 - nodes) / (n * pm1) ** 2
    weights[0] = 2.0 / n**2
    return nodes, weights


def lgr_rule(n: int) -> LgrRule:
    """Return the ``n``-point Legendre-Gauss-Radau rule on [-1, 1)."""
    if not isinstance(n, (int, np.integer)) or n < 1 or n > MAX_DEGREE:
        raise ValueError(f"LGR degree must be an integer in [1, {MAX_DEGREE}], got {n!r}")
    nodes, weights = _lgr_arrays(int(n))
    return LgrRule(int(n), nodes.copy(), weights.copy())


def barycentric_weights(support) -> np.ndarray:
    """Barycentric weights of ``support``; scale-free (normalized to [-1, 1])."""
    x = np.asarray(support, dtype=float)
    if x.size == 1:
        return np.ones(1)
    span = x.max() - x.min()
    if span <= 0.0:
        raise ValueError("support points must be distinct")
    xs = (x - 0.5 * (x.max() + x.min())) * (2.0 / span)
    diff = xs[:, None] - xs[None, :]
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0.0):
        raise ValueError("support points must be distinct")
    return 1.0 / np.prod(diff, axis=1)


def lagrange_matrix(support, query) -> np.ndarray:
    """Matrix ``A`` with ``A @ values`` the interpolant of ``values`` at ``query``."""
    x = np.asarray(support, dtype=float)
    q = np.atleast_1d(np.asarray(query, dtype=float))
    w = barycentric_weights(x)
    diff = q[:, None] - x[None, :]
    exact = diff == 0.0
    hit = exact.any(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = w[None, :] / diff
        terms[hit] = 0.0
        a = terms / terms.sum(axis=1, keepdims=True)
    a[hit] = exact[hit]
    return a


def lagrange_eval(support, values, query) -> np.ndarray:
    """Evaluate the interpolating polynomial through ``(support, values)`` at ``query``.

    ``values`` may carry trailing dimensions (one row per support point).
    """
    vals = np.asarray(values, dtype=float)
    a = lagrange_matrix(support, query)
    return a @ vals


def diff_matrix(grid: IntervalGrid) -> np.ndarray:
    """N x (N+1) matrix of basis derivatives at the collocation points."""
    x = grid.support
    w = barycentric_weights(x)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    d = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return d[:-1, :]


def integ_matrix(rule: LgrRule, grid: IntervalGrid) -> np.ndarray:
    """M x M integration matrix: row ``j`` integrates from ``grid.left`` to support point ``j+1``.

    Integrals of the degree M-1 Lagrange basis over the collocation points are
    computed with an M-point Gauss-Legendre rule on each sub-range.
    """
    m = rule.degree
    if grid.colloc_pts.size != m:
        raise ValueError(f"rule degree {m} does not match grid with {grid.colloc_pts.size} points")
    gx, gw = np.polynomial.legendre.leggauss(max(m, 1))
    x = grid.colloc_pts
    upper = grid.support[1:]
    half = 0.5 * (upper - grid.left)
    pts = grid.left + half[:, None] * (gx[None, :] + 1.0)
    basis = lagrange_matrix(x, pts.ravel()).reshape(m, gx.size, m)
    return np.einsum("jq,q,jql->jl", half[:, None] * np.ones_like(pts), gw, basis)


def tau_to_t(tau, t0: float, tf: float):
    """Affine map from the computational domain [-1, 1] to [t0, tf]."""
    if not tf > t0:
        raise ValueError(f"need tf > t0, got t0={t0}, tf={tf}")
    return 0.5 * (tf - t0) * np.asarray(tau) + 0.5 * (tf + t0)
