"""Multiple-interval LGR collocation of an :class:`OcpProblem` into an :class:`NlpProblem`.

Decision vector, interval by interval: the state block (the interval's
collocation nodes, row-major ``nodes x n_y``; the last interval also stores
the final endpoint) followed by the control block (``P_k x n_u``), then
``t0`` and ``tf``. The endpoint of interval k is the first node of interval
k+1, so the two share one variable.

Constraint rows: defects (point-major, ``n_y`` per collocation point), path
constraints (``n_c`` per collocation point), boundary constraints.

Derivatives are central differences of the pointwise problem functions,
vectorized over all collocation points, plus the exact linear part coming
from the differentiation matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .basis import diff_matrix, lagrange_eval, lgr_rule
from .fd import DEFAULT_STEP, check_finite, steps
from .mesh import Mesh
from .nlp import NlpProblem
from .problems import OcpProblem


@dataclass(frozen=True)
class DecisionLayout:
    mesh: Mesh
    n_y: int
    n_u: int
    y_index: np.ndarray  # (P+1, n_y) positions of state nodes in z
    u_index: np.ndarray  # (P, n_u) positions of controls in z
    t0_index: int
    tf_index: int

    @property
    def n_points(self) -> int:
        return int(self.u_index.shape[0])

    @property
    def size(self) -> int:
        return self.tf_index + 1

    @classmethod
    def build(cls, mesh: Mesh, n_y: int, n_u: int) -> "DecisionLayout":
        P = mesh.total_points
        y_index = np.empty((P + 1, n_y), dtype=int)
        u_index = np.empty((P, n_u), dtype=int)
        pos = 0
        node = 0
        K = mesh.n_intervals
        for k, pk in enumerate(mesh.degrees):
            pk = int(pk)
            rows = pk + 1 if k == K - 1 else pk
            y_index[node:node + rows] = pos + np.arange(rows * n_y).reshape(rows, n_y)
            pos += rows * n_y
            u_index[node:node + pk] = pos + np.arange(pk * n_u).reshape(pk, n_u)
            pos += pk * n_u
            node += pk
        for arr in (y_index, u_index):
            arr.setflags(write=False)
        return cls(mesh, n_y, n_u, y_index, u_index, pos, pos + 1)

    def interval_nodes(self, k: int) -> slice:
        """Global node indices of interval k's support points (P_k + 1 of them)."""
        start = int(self.mesh.degrees[:k].sum())
        return slice(start, start + int(self.mesh.degrees[k]) + 1)

    def interval_points(self, k: int) -> slice:
        start = int(self.mesh.degrees[:k].sum())
        return slice(start, start + int(self.mesh.degrees[k]))


@dataclass
class CollocationSolution:
    """States on all support nodes, controls on all collocation points, and times."""

    mesh: Mesh
    states: np.ndarray  # (P+1, n_y)
    controls: np.ndarray  # (P, n_u)
    t0: float
    tf: float
    cost: float = float("nan")
    status: str = ""
    multipliers: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_y(self) -> int:
        return self.states.shape[1]

    @property
    def n_u(self) -> int:
        return self.controls.shape[1]

    @property
    def tau(self) -> np.ndarray:
        """Collocation points in [-1, 1)."""
        return self.mesh.collocation_points()

    @property
    def tau_nodes(self) -> np.ndarray:
        """All support nodes: the collocation points plus +1."""
        return np.append(self.tau, 1.0)

    def time(self, tau) -> np.ndarray:
        return 0.5 * (self.tf - self.t0) * np.asarray(tau) + 0.5 * (self.tf + self.t0)

    def _offsets(self):
        return np.concatenate(([0], np.cumsum(self.mesh.degrees)))

    def interval_states(self, k: int) -> np.ndarray:
        off = self._offsets()
        return self.states[off[k]:off[k + 1] + 1]

    def interval_controls(self, k: int) -> np.ndarray:
        off = self._offsets()
        return self.controls[off[k]:off[k + 1]]

    def state_at(self, tau) -> np.ndarray:
        """Evaluate the piecewise state interpolant at ``tau`` (shape ``(len(tau), n_y)``)."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        out = np.empty((tau.size, self.n_y))
        ks = np.array([self.mesh.locate(t) for t in tau])
        for k in np.unique(ks):
            sel = ks == k
            out[sel] = lagrange_eval(self.mesh.grid(k).support, self.interval_states(k), tau[sel])
        return out

    def control_at(self, tau) -> np.ndarray:
        """Interval-local control interpolant (degree P_k - 1), right-continuous at mesh points."""
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        out = np.empty((tau.size, self.n_u))
        ks = np.array([self.mesh.locate(t) for t in tau])
        for k in np.unique(ks):
            sel = ks == k
            out[sel] = lagrange_eval(self.mesh.grid(k).colloc_pts, self.interval_controls(k), tau[sel])
        return out


def unpack(z, layout: DecisionLayout) -> CollocationSolution:
    z = np.asarray(z, dtype=float)
    if z.shape != (layout.size,):
        raise ValueError(f"decision vector has length {z.size}, layout expects {layout.size}")
    return CollocationSolution(
        layout.mesh, z[layout.y_index].copy(), z[layout.u_index].copy(),
        float(z[layout.t0_index]), float(z[layout.tf_index]),
    )


def pack(solution: CollocationSolution, layout: DecisionLayout) -> np.ndarray:
    z = np.empty(layout.size)
    z[layout.y_index] = solution.states
    z[layout.u_index] = solution.controls
    z[layout.t0_index] = solution.t0
    z[layout.tf_index] = solution.tf
    return z


def global_diff_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Block P x (P+1) differentiation matrix in the global tau coordinate."""
    P = mesh.total_points
    rows, cols, vals = [], [], []
    start = 0
    for k in range(mesh.n_intervals):
        g = mesh.grid(k)
        left, right = mesh.interval(k)
        # diff_matrix works on the mapped grid, so it is already d/dtau.
        d = diff_matrix(g)
        pk = d.shape[0]
        r, c = np.indices(d.shape)
        rows.append(start + r.ravel())
        cols.append(start + c.ravel())
        vals.append(d.ravel())
        start += pk
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(P, P + 1)
    )


def quadrature_weights(mesh: Mesh) -> np.ndarray:
    """LGR weights for integrating over tau in [-1, 1] on the whole mesh."""
    out = []
    for k in range(mesh.n_intervals):
        left, right = mesh.interval(k)
        out.append(lgr_rule(int(mesh.degrees[k])).weights * (0.5 * (right - left)))
    return np.concatenate(out)


def jacobian_sparsity(layout: DecisionLayout, mesh: Mesh, problem: OcpProblem) -> sp.csr_matrix:
    ny, nu, nc, nb = problem.n_y, problem.n_u, problem.n_c, problem.n_b
    P = layout.n_points
    t_cols = np.array([layout.t0_index, layout.tf_index])
    rows, cols = [], []
    start = 0
    for k in range(mesh.n_intervals):
        pk = int(mesh.degrees[k])
        ycols = layout.y_index[start:start + pk + 1].ravel()
        for g in range(start, start + pk):
            pt_cols = np.concatenate((ycols, layout.u_index[g], t_cols))
            r = g * ny + np.arange(ny)
            rows.append(np.repeat(r, pt_cols.size))
            cols.append(np.tile(pt_cols, ny))
        start += pk
    base = ny * P
    for g in range(P if nc else 0):
        pt_cols = np.concatenate((layout.y_index[g], layout.u_index[g], t_cols))
        r = base + g * nc + np.arange(nc)
        rows.append(np.repeat(r, pt_cols.size))
        cols.append(np.tile(pt_cols, nc))
    base += nc * P
    if nb:
        ev_cols = np.concatenate((layout.y_index[0], layout.y_index[-1], t_cols))
        r = base + np.arange(nb)
        rows.append(np.repeat(r, ev_cols.size))
        cols.append(np.tile(ev_cols, nb))
    m = (ny + nc) * P + nb
    if not rows:
        return sp.csr_matrix((m, layout.size), dtype=bool)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    pat = sp.csr_matrix((np.ones(rows.size, dtype=bool), (rows, cols)), shape=(m, layout.size))
    pat.sum_duplicates()
    return pat


def hessian_sparsity(layout: DecisionLayout, problem: OcpProblem) -> sp.csr_matrix:
    """Pattern of the Lagrangian Hessian: per-point (y, u) blocks, the two time
    columns against everything, and the endpoint block used by Mayer/boundary terms."""
    P = layout.n_points
    n = layout.size
    rows, cols = [], []
    for g in range(P):
        idx = np.concatenate((layout.y_index[g], layout.u_index[g]))
        rows.append(np.repeat(idx, idx.size))
        cols.append(np.tile(idx, idx.size))
    ev = np.concatenate((layout.y_index[0], layout.y_index[-1], [layout.t0_index, layout.tf_index]))
    rows.append(np.repeat(ev, ev.size))
    cols.append(np.tile(ev, ev.size))
    t = np.array([layout.t0_index, layout.tf_index])
    everything = np.arange(n)
    rows += [np.repeat(t, n), np.tile(everything, 2)]
    cols += [np.tile(everything, 2), np.repeat(t, n)]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    pat = sp.csr_matrix((np.ones(rows.size, dtype=bool), (rows, cols)), shape=(n, n))
    pat.sum_duplicates()
    return pat


class Transcription:
    """The collocation NLP for one (problem, mesh) pair, with its layout and evaluators."""

    def __init__(self, problem: OcpProblem, mesh: Mesh, step_scale: float = DEFAULT_STEP):
        mesh.validate(p_min=1, p_max=64)
        self.problem = problem
        self.mesh = mesh
        self.step_scale = step_scale
        ny, nu = problem.n_y, problem.n_u
        self.layout = layout = DecisionLayout.build(mesh, ny, nu)
        self.D = global_diff_matrix(mesh)
        self.weights = quadrature_weights(mesh)
        self.tau = mesh.collocation_points()
        P = layout.n_points
        self.n_points = P
        self.n_defects = ny * P
        self.n_path = problem.n_c * P
        self.n_con = self.n_defects + self.n_path + problem.n_b
        # Kronecker form of D acting on the flattened (node-major) state block.
        self._Dk = sp.kron(self.D, sp.identity(ny), format="csr")
        self.pattern = jacobian_sparsity(layout, mesh, problem)

    # -- unpacking ------------------------------------------------------------

    def _split(self, z):
        lay = self.layout
        return z[lay.y_index], z[lay.u_index], z[lay.t0_index], z[lay.tf_index]

    def times(self, t0, tf):
        return 0.5 * (tf - t0) * self.tau + 0.5 * (tf + t0)

    # -- evaluators -------------------------------------------------------------

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        Y, U, t0, tf = self._split(z)
        prob = self.problem
        val = 0.0
        if prob.mayer is not None:
            val += float(prob.mayer(Y[0], t0, Y[-1], tf))
        if prob.lagrange is not None:
            t = self.times(t0, tf)
            val += 0.5 * (tf - t0) * float(self.weights @ prob.lagrange(Y[:-1], U, t))
        return val

    def constraints(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        Y, U, t0, tf = self._split(z)
        prob = self.problem
        t = self.times(t0, tf)
        a = np.asarray(prob.dynamics(Y[:-1], U, t), dtype=float)
        parts = [(self.D @ Y - 0.5 * (tf - t0) * a).ravel()]
        if prob.n_c:
            parts.append(np.asarray(prob.path(Y[:-1], U, t), dtype=float).ravel())
        if prob.n_b:
            parts.append(np.asarray(prob.boundary(Y[0], t0, Y[-1], tf), dtype=float).ravel())
        return np.concatenate(parts)

    def _point_partials(self, fun, Ycol, U, t, width):
        """Central-difference partials of a pointwise function w.r.t. y, u and t.

        Returns arrays shaped (P, width, n_y), (P, width, n_u) and (P, width).
        """
        h = self.step_scale
        P = Ycol.shape[0]

        def shaped(v):
            return np.asarray(v, dtype=float).reshape(P, width)

        def partial(arr, others):
            out = np.empty((P, width, arr.shape[1]))
            hs = steps(arr, h)
            for l in range(arr.shape[1]):
                ap = arr.copy()
                am = arr.copy()
                ap[:, l] += hs[:, l]
                am[:, l] -= hs[:, l]
                dv = shaped(others(ap)) - shaped(others(am))
                out[:, :, l] = dv / (ap[:, l] - am[:, l])[:, None]
            return out

        dy = partial(Ycol, lambda v: fun(v, U, t))
        du = partial(U, lambda v: fun(Ycol, v, t)) if U.shape[1] else np.zeros((P, width, 0))
        dt = partial(t[:, None], lambda v: fun(Ycol, U, v[:, 0]))[:, :, 0]
        return dy, du, dt

    def _event_partials(self, fun, Y0, t0, Yf, tf, width):
        """Central differences of an endpoint function w.r.t. (y0, yf, t0, tf)."""
        ny = Y0.size
        v = np.concatenate((Y0, Yf, [t0, tf]))
        hs = steps(v, self.step_scale)
        out = np.empty((width, v.size))

        def call(w):
            return np.atleast_1d(np.asarray(fun(w[:ny], w[-2], w[ny:2 * ny], w[-1]), dtype=float))

        for i in range(v.size):
            vp = v.copy()
            vm = v.copy()
            vp[i] += hs[i]
            vm[i] -= hs[i]
            out[:, i] = (call(vp) - call(vm)) / (vp[i] - vm[i])
        return out

    def gradient(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        lay = self.layout
        Y, U, t0, tf = self._split(z)
        prob = self.problem
        g = np.zeros(lay.size)
        ev_idx = np.concatenate((lay.y_index[0], lay.y_index[-1], [lay.t0_index, lay.tf_index]))
        if prob.mayer is not None:
            np.add.at(g, ev_idx, self._event_partials(prob.mayer, Y[0], t0, Y[-1], tf, 1)[0])
        if prob.lagrange is not None:
            t = self.times(t0, tf)
            s = 0.5 * (tf - t0)
            w = self.weights
            L = np.asarray(prob.lagrange(Y[:-1], U, t), dtype=float)
            dy, du, dt = self._point_partials(prob.lagrange, Y[:-1], U, t, 1)
            np.add.at(g, lay.y_index[:-1], s * w[:, None] * dy[:, 0, :])
            np.add.at(g, lay.u_index, s * w[:, None] * du[:, 0, :])
            wdt = w * dt[:, 0]
            g[lay.t0_index] += -0.5 * (w @ L) + s * (wdt @ (0.5 * (1.0 - self.tau)))
            g[lay.tf_index] += 0.5 * (w @ L) + s * (wdt @ (0.5 * (1.0 + self.tau)))
        return check_finite(g, "objective gradient")

    def jacobian(self, z) -> sp.csr_matrix:
        z = np.asarray(z, dtype=float)
        lay = self.layout
        prob = self.problem
        ny, nu, nc, nb = prob.n_y, prob.n_u, prob.n_c, prob.n_b
        Y, U, t0, tf = self._split(z)
        P = self.n_points
        Ycol = Y[:-1]
        t = self.times(t0, tf)
        s = 0.5 * (tf - t0)
        dt0 = 0.5 * (1.0 - self.tau)
        dtf = 0.5 * (1.0 + self.tau)
        rows, cols, vals = [], [], []

        # Linear part from the differentiation matrix, over the state columns.
        Dk = self._Dk.tocoo()
        rows.append(Dk.row)
        cols.append(lay.y_index.ravel()[Dk.col])
        vals.append(Dk.data)

        def pointwise(fun, width, row0, scale):
            vals_f = np.asarray(fun(Ycol, U, t), dtype=float).reshape(P, width)
            dy, du, dt = self._point_partials(fun, Ycol, U, t, width)
            r = row0 + np.arange(P)[:, None] * width + np.arange(width)[None, :]  # (P, width)
            rows.append(np.repeat(r[:, :, None], ny, axis=2).ravel())
            cols.append(np.broadcast_to(lay.y_index[:-1][:, None, :], (P, width, ny)).ravel())
            vals.append((scale * dy).ravel())
            if nu:
                rows.append(np.repeat(r[:, :, None], nu, axis=2).ravel())
                cols.append(np.broadcast_to(lay.u_index[:, None, :], (P, width, nu)).ravel())
                vals.append((scale * du).ravel())
            return vals_f, dt, r

        a, dadt, r = pointwise(prob.dynamics, ny, 0, -s)
        rows += [r.ravel(), r.ravel()]
        cols += [np.full(r.size, lay.t0_index), np.full(r.size, lay.tf_index)]
        vals += [(0.5 * a - s * dadt * dt0[:, None]).ravel(), (-0.5 * a - s * dadt * dtf[:, None]).ravel()]
        if nc:
            _, dcdt, r = pointwise(prob.path, nc, ny * P, 1.0)
            rows += [r.ravel(), r.ravel()]
            cols += [np.full(r.size, lay.t0_index), np.full(r.size, lay.tf_index)]
            vals += [(dcdt * dt0[:, None]).ravel(), (dcdt * dtf[:, None]).ravel()]
        if nb:
            jb = self._event_partials(prob.boundary, Y[0], t0, Y[-1], tf, nb)
            ev_idx = np.concatenate((lay.y_index[0], lay.y_index[-1], [lay.t0_index, lay.tf_index]))
            r0 = (ny + nc) * P
            rows.append(np.repeat(r0 + np.arange(nb), ev_idx.size))
            cols.append(np.tile(ev_idx, nb))
            vals.append(jb.ravel())
        jac = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_con, lay.size),
        )
        jac.sum_duplicates()
        check_finite(jac.data, "constraint jacobian")
        return jac

    # -- bounds -------------------------------------------------------------------

    def variable_bounds(self):
        lay = self.layout
        prob = self.problem
        lo = np.empty(lay.size)
        hi = np.empty(lay.size)
        ylo, yhi = prob.state_bounds
        lo[lay.y_index] = ylo
        hi[lay.y_index] = yhi
        for node, (blo, bhi) in ((0, prob.initial_state_bounds), (-1, prob.final_state_bounds)):
            lo[lay.y_index[node]] = np.maximum(ylo, blo)
            hi[lay.y_index[node]] = np.minimum(yhi, bhi)
        ulo, uhi = prob.control_bounds
        lo[lay.u_index] = ulo
        hi[lay.u_index] = uhi
        lo[lay.t0_index], hi[lay.t0_index] = prob.t0_bounds
        lo[lay.tf_index], hi[lay.tf_index] = prob.tf_bounds
        return lo, hi

    def constraint_bounds(self):
        lo = np.full(self.n_con, -np.inf)
        hi = np.zeros(self.n_con)
        lo[: self.n_defects] = 0.0
        return lo, hi

    def nlp(self) -> NlpProblem:
        zl, zu = self.variable_bounds()
        cl, cu = self.constraint_bounds()
        return NlpProblem(
            n=self.layout.size,
            objective=self.objective,
            constraints=self.constraints,
            z_lower=zl,
            z_upper=zu,
            c_lower=cl,
            c_upper=cu,
            jac_sparsity=self.pattern,
            gradient=self.gradient,
            jacobian=self.jacobian,
            hess_sparsity=hessian_sparsity(self.layout, self.problem),
        )

    def unpack(self, z) -> CollocationSolution:
        sol = unpack(z, self.layout)
        sol.cost = self.objective(np.asarray(z, dtype=float))
        return sol

    def pack(self, solution: CollocationSolution) -> np.ndarray:
        return pack(solution, self.layout)


def transcribe(problem: OcpProblem, mesh: Mesh, step_scale: float = DEFAULT_STEP):
    """Build the collocation NLP; returns ``(nlp, layout, transcription)``."""
    problem.check_dimensions()
    tr = Transcription(problem, mesh, step_scale)
    return tr.nlp(), tr.layout, tr
