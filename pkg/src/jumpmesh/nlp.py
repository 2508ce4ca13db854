"""Nonlinear program contract and the bundled primal-dual interior-point solver.

Problem form::

    minimize   f(z)
    subject to c_lower <= c(z) <= c_upper
               z_lower <= z <= z_upper

Rows with ``c_lower == c_upper`` are equalities. Variables with equal bounds
are held fixed and removed from the iteration.
"""
from __future__ import annotations

import abc
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fd import (
    DEFAULT_STEP,
    HessianColoring,
    NonFiniteError,
    check_finite,
    color_columns,
    fd_gradient,
    fd_hessian,
    fd_jacobian_grouped,
)

log = logging.getLogger(__name__)

Status = Literal["optimal", "acceptable", "max_iter", "infeasible", "error"]


@dataclass
class NlpProblem:
    n: int
    objective: Callable[[np.ndarray], float]
    constraints: Callable[[np.ndarray], np.ndarray]
    z_lower: np.ndarray
    z_upper: np.ndarray
    c_lower: np.ndarray
    c_upper: np.ndarray
    jac_sparsity: sp.spmatrix
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    jacobian: Optional[Callable[[np.ndarray], sp.spmatrix]] = None
    hess_sparsity: Optional[sp.spmatrix] = None

    @property
    def m(self) -> int:
        return int(np.size(self.c_lower))

    def eval_gradient(self, z, step_scale=DEFAULT_STEP):
        if self.gradient is not None:
            return check_finite(np.asarray(self.gradient(z), dtype=float), "objective gradient")
        return fd_gradient(self.objective, z, step_scale)

    def eval_jacobian(self, z, step_scale=DEFAULT_STEP, colors=None):
        if self.jacobian is not None:
            jac = sp.csr_matrix(self.jacobian(z))
            check_finite(jac.data, "constraint jacobian")
            return jac
        return fd_jacobian(self, z, step_scale, colors)


def fd_jacobian(nlp: NlpProblem, z, step_scale: float = DEFAULT_STEP, colors=None) -> sp.csr_matrix:
    """Grouped central-difference Jacobian of ``nlp.constraints`` on its sparsity pattern."""
    return fd_jacobian_grouped(nlp.constraints, z, nlp.jac_sparsity, colors, step_scale)


@dataclass
class SolverOptions:
    kkt_tolerance: float = 1e-9
    max_iterations: int = 500
    fd_mode: Literal["central"] = "central"
    fd_step_scale: float = DEFAULT_STEP
    mu_init: float = 0.1
    acceptable_factor: float = 1e2
    acceptable_iterations: int = 15
    bound_push: float = 1e-2
    verbose: bool = False

    def __post_init__(self):
        if not self.kkt_tolerance > 0:
            raise ValueError("kkt_tolerance must be positive")
        if self.fd_mode != "central":
            raise ValueError(f"unsupported fd_mode {self.fd_mode!r}")


@dataclass
class SolveOutcome:
    status: Status
    z: np.ndarray
    multipliers: np.ndarray
    kkt_residual: float
    iterations: int
    objective: float = math.nan
    constraint_violation: float = math.nan
    message: str = ""
    bound_multipliers: tuple = field(default=(None, None), repr=False)

    @property
    def usable(self) -> bool:
        return self.status in ("optimal", "acceptable")


class NlpSolver(abc.ABC):
    """Anything that can solve an :class:`NlpProblem` from a starting point."""

    @abc.abstractmethod
    def solve(self, nlp: NlpProblem, z0, options: SolverOptions | None = None) -> SolveOutcome:
        ...


def solve(nlp: NlpProblem, z0, options: SolverOptions | None = None) -> SolveOutcome:
    return InteriorPointSolver().solve(nlp, z0, options)


class _Reduced:
    """The NLP restricted to its free variables, with inequality slacks appended."""

    def __init__(self, nlp: NlpProblem, z0, opts: SolverOptions):
        self.nlp = nlp
        self.opts = opts
        zl = np.asarray(nlp.z_lower, dtype=float)
        zu = np.asarray(nlp.z_upper, dtype=float)
        self.fixed = zl == zu
        self.free = np.flatnonzero(~self.fixed)
        z0 = np.clip(np.asarray(z0, dtype=float), zl, zu)
        self.z_base = z0.copy()
        self.z_base[self.fixed] = zl[self.fixed]
        cl = np.asarray(nlp.c_lower, dtype=float)
        cu = np.asarray(nlp.c_upper, dtype=float)
        self.eq = np.flatnonzero(cl == cu)
        self.ineq = np.flatnonzero(cl != cu)
        self.c_target = cl[self.eq]
        self.nx = self.free.size
        self.ns = self.ineq.size
        self.nw = self.nx + self.ns
        self.m = self.eq.size + self.ns
        self.lower = np.concatenate((zl[self.free], cl[self.ineq]))
        self.upper = np.concatenate((zu[self.free], cu[self.ineq]))
        self.has_lo = np.isfinite(self.lower)
        self.has_up = np.isfinite(self.upper)
        # Constraint rows reordered as [equalities; inequalities].
        self.row_order = np.concatenate((self.eq, self.ineq))
        pat = sp.csr_matrix(nlp.jac_sparsity, dtype=bool)[self.row_order][:, self.free]
        self.jac_pattern = pat
        self.colors = color_columns(pat) if nlp.jacobian is None and pat.shape[1] else None
        full_colors = None
        if nlp.jacobian is None:
            full_colors = np.zeros(nlp.n, dtype=int)
            if self.colors is not None:
                full_colors[self.free] = self.colors
                full_colors[self.fixed] = -1
        self.full_colors = full_colors
        if nlp.hess_sparsity is not None:
            hp = sp.csr_matrix(nlp.hess_sparsity, dtype=bool)[self.free][:, self.free]
        else:
            hp = sp.csr_matrix(np.ones((self.nx, self.nx), dtype=bool))
        self.hess_coloring = HessianColoring(hp)
        self.n_evals = 0

    def full(self, x):
        z = self.z_base.copy()
        z[self.free] = x
        return z

    def f(self, x):
        self.n_evals += 1
        val = float(self.nlp.objective(self.full(x)))
        if not math.isfinite(val):
            raise NonFiniteError("objective")
        return val

    def c(self, x):
        cz = np.asarray(self.nlp.constraints(self.full(x)), dtype=float)
        check_finite(cz, "constraints")
        return cz[self.row_order]

    def grad(self, x):
        return self.nlp.eval_gradient(self.full(x), self.opts.fd_step_scale)[self.free]

    def jac(self, x):
        z = self.full(x)
        if self.nlp.jacobian is not None:
            j = self.nlp.eval_jacobian(z)
        else:
            j = fd_jacobian_grouped(self.nlp.constraints, z, self.nlp.jac_sparsity,
                                    self._full_colors(), self.opts.fd_step_scale)
        return sp.csr_matrix(j)[self.row_order][:, self.free]

    def _full_colors(self):
        # Fixed columns must never be perturbed; give them a color of their own
        # that is skipped by shifting them past the last used color and
        # discarding their (unused) derivatives.
        cols = self.full_colors.copy()
        if self.fixed.any():
            cols[self.fixed] = cols.max() + 1 if cols.size else 0
        return cols

    def lagrangian_grad(self, x, y):
        g = self.grad(x)
        if self.m:
            g = g + self.jac(x).T @ y
        return g

    def hessian(self, x, y):
        return fd_hessian(lambda v: self.lagrangian_grad(v, y), x, self.hess_coloring)


class InteriorPointSolver(NlpSolver):
    """Primal-dual log-barrier method with slack inequalities.

    Monotone barrier reduction, Newton steps on the full KKT system by sparse
    LU, curvature-tested diagonal regularization, fraction-to-boundary rule,
    and a backtracking line search on an l1 merit function with one
    second-order correction.
    """

    kappa_eps = 10.0
    kappa_mu = 0.2
    theta_mu = 1.5
    s_max = 100.0
    kappa_sigma = 1e10
    max_stalled = 25
    infeasible_violation = 1e-4

    def solve(self, nlp: NlpProblem, z0, options: SolverOptions | None = None) -> SolveOutcome:
        opts = options or SolverOptions()
        try:
            red = _Reduced(nlp, z0, opts)
            return self._run(red, opts)
        except NonFiniteError as exc:
            z = np.clip(np.asarray(z0, dtype=float), nlp.z_lower, nlp.z_upper)
            return SolveOutcome("error", z, np.zeros(nlp.m), math.inf, 0, message=str(exc))

    # -- helpers --------------------------------------------------------------

    def _push_inside(self, w, red, push):
        lo, up = red.lower, red.upper
        both = red.has_lo & red.has_up
        width = np.where(both, up - lo, np.inf)
        p_lo = np.minimum(push * np.maximum(1.0, np.abs(np.where(red.has_lo, lo, 0.0))), 0.5 * width)
        p_up = np.minimum(push * np.maximum(1.0, np.abs(np.where(red.has_up, up, 0.0))), 0.5 * width)
        w = np.where(red.has_lo, np.maximum(w, lo + p_lo), w)
        w = np.where(red.has_up, np.minimum(w, up - p_up), w)
        return w

    def _run(self, red: _Reduced, opts: SolverOptions) -> SolveOutcome:
        nx, ns, nw, m = red.nx, red.ns, red.nw, red.m
        neq = red.eq.size
        tol = opts.kkt_tolerance
        lo, up = red.lower, red.upper
        ilo, iup = red.has_lo, red.has_up

        x = red.z_base[red.free].copy()
        w = np.empty(nw)
        w[:nx] = x
        w = self._push_inside(w, red, opts.bound_push)
        viol0 = self._violation(red.nlp, red.full(w[:nx]))
        c0 = red.c(w[:nx]) if m else np.zeros(0)
        if ns:
            w[nx:] = c0[neq:]
            w = self._push_inside(w, red, opts.bound_push)
        zl = np.where(ilo, 1.0, 0.0)
        zu = np.where(iup, 1.0, 0.0)
        mu = opts.mu_init

        def h_of(wv, cv):
            out = cv.copy()
            if neq:
                out[:neq] -= red.c_target
            if ns:
                out[neq:] -= wv[nx:]
            return out

        def slack_lo(wv):
            return np.where(ilo, wv - np.where(ilo, lo, 0.0), 1.0)

        def slack_up(wv):
            return np.where(iup, np.where(iup, up, 0.0) - wv, 1.0)

        def a_matrix(jx):
            if ns:
                s_block = sp.vstack([sp.csr_matrix((neq, ns)), -sp.identity(ns, format="csr")])
                return sp.hstack([jx, s_block]).tocsr()
            return jx.tocsr()

        def barrier(wv, f_val, mu_):
            sl_, su_ = slack_lo(wv)[ilo], slack_up(wv)[iup]
            if np.any(sl_ <= 0.0) or np.any(su_ <= 0.0):
                return math.inf  # rounding pushed a slack onto its bound
            return f_val - mu_ * (np.sum(np.log(sl_)) + np.sum(np.log(su_)))

        def grad_w(gx):
            g = np.zeros(nw)
            g[:nx] = gx
            return g

        f_val = red.f(w[:nx])
        cval = c0 if m else np.zeros(0)
        gx = red.grad(w[:nx])
        jx = red.jac(w[:nx]) if m else sp.csr_matrix((0, nx))
        A = a_matrix(jx)
        y = self._init_multipliers(grad_w(gx) - zl + zu, A, nw, m)

        nu = 1.0
        delta_last = 0.0
        acceptable_count = 0
        stalled = 0
        status: Status = "max_iter"
        it = 0
        kkt = math.inf
        message = ""
        for it in range(opts.max_iterations + 1):
            h = h_of(w, cval)
            g = grad_w(gx)
            sl, su = slack_lo(w), slack_up(w)
            r_dual = g + A.T @ y - zl + zu
            err0, kkt_parts = self._errors(r_dual, h, sl, su, zl, zu, ilo, iup, y, 0.0)
            kkt = err0
            if opts.verbose:
                log.info("it %3d f=%.10e |h|=%.2e dual=%.2e compl=%.2e mu=%.1e",
                         it, f_val, kkt_parts[1], kkt_parts[0], kkt_parts[2], mu)
            if err0 <= tol:
                status = "optimal"
                break
            if err0 <= opts.acceptable_factor * tol:
                acceptable_count += 1
                if acceptable_count >= opts.acceptable_iterations:
                    status = "acceptable"
                    break
            else:
                acceptable_count = 0
            if it == opts.max_iterations:
                status = "acceptable" if err0 <= opts.acceptable_factor * tol else "max_iter"
                break
            # barrier update
            mu = self._monotone_mu(mu, tol, r_dual, h, sl, su, zl, zu, ilo, iup, y)

            W = red.hessian(w[:nx], y[:m] if m else y) if nx else sp.csr_matrix((0, 0))
            W = W.tocsr()
            sig = np.where(ilo, zl / sl, 0.0) + np.where(iup, zu / su, 0.0)
            grad_phi = g - np.where(ilo, mu / sl, 0.0) + np.where(iup, mu / su, 0.0)
            rhs_top = -(grad_phi + A.T @ y)
            rhs_bot = -h

            Wfull = sp.block_diag([W, sp.csr_matrix((ns, ns))]).tocsr() if ns else W
            step = self._newton_step(Wfull, sig, A, rhs_top, rhs_bot, delta_last)
            if step is None:
                status, message = "error", "KKT system could not be factorized"
                break
            dw, dy, delta, lu, kkt_mat = step
            if delta > 0:
                delta_last = delta

            dzl = np.where(ilo, mu / sl - zl - zl / sl * dw, 0.0)
            dzu = np.where(iup, mu / su - zu + zu / su * dw, 0.0)

            tau = max(0.99, 1.0 - mu)
            alpha_max = self._max_step(np.concatenate((sl[ilo], su[iup])),
                                       np.concatenate((dw[ilo], -dw[iup])), tau)
            alpha_z = self._max_step(np.concatenate((zl[ilo], zu[iup])),
                                     np.concatenate((dzl[ilo], dzu[iup])), tau)

            # l1 merit penalty
            hnorm = np.abs(h).sum()
            quad = float(dw @ (Wfull @ dw) + dw @ (sig * dw))
            dphi = float(grad_phi @ dw)
            if hnorm > 0:
                nu_trial = (dphi + 0.5 * max(quad, 0.0)) / (0.9 * hnorm)
                if nu < nu_trial:
                    nu = nu_trial + 1.0
            phi0 = barrier(w, f_val, mu) + nu * hnorm
            dmerit = dphi - nu * hnorm

            alpha = alpha_max
            accepted = False
            soc_tried = False
            for _ in range(60):
                w_try = w + alpha * dw
                f_try = red.f(w_try[:nx])
                c_try = red.c(w_try[:nx]) if m else np.zeros(0)
                h_try = h_of(w_try, c_try)
                phi_try = barrier(w_try, f_try, mu) + nu * np.abs(h_try).sum()
                if phi_try <= phi0 + 1e-4 * alpha * dmerit:
                    accepted = True
                    break
                if not soc_tried and alpha == alpha_max and m:
                    soc_tried = True
                    soc = self._soc(lu, kkt_mat, rhs_top, alpha * h + h_try, nw, red, w, sl, su, tau)
                    if soc is not None:
                        dw_soc, a_soc = soc
                        w_soc = w + a_soc * dw_soc
                        f_soc = red.f(w_soc[:nx])
                        c_soc = red.c(w_soc[:nx])
                        h_soc = h_of(w_soc, c_soc)
                        phi_soc = barrier(w_soc, f_soc, mu) + nu * np.abs(h_soc).sum()
                        if phi_soc <= phi0 + 1e-4 * alpha * dmerit:
                            w_try, f_try, c_try = w_soc, f_soc, c_soc
                            accepted = True
                            break
                alpha *= 0.5
                if alpha < 1e-14:
                    break
            if not accepted:
                # Tiny step anyway; the next iteration re-linearizes.
                stalled += 1
                if stalled >= self.max_stalled:
                    status, message = "error", f"line search failed {stalled} times in a row"
                    break
                alpha = min(alpha_max, 1e-8)
                w_try = w + alpha * dw
                if not math.isfinite(barrier(w_try, 0.0, 1.0)):
                    w_try = w
                f_try = red.f(w_try[:nx])
                c_try = red.c(w_try[:nx]) if m else np.zeros(0)
                delta_last = max(10 * delta_last, 1e-4)
            else:
                stalled = 0

            if opts.verbose:
                log.info("    alpha=%.3e alpha_max=%.3e alpha_z=%.3e nu=%.2e delta=%.1e accepted=%s", alpha, alpha_max, alpha_z, nu, delta, accepted)
            w = w_try
            f_val = f_try
            cval = c_try
            y = y + alpha * dy
            zl = zl + alpha_z * dzl
            zu = zu + alpha_z * dzu
            sl, su = slack_lo(w), slack_up(w)
            zl = np.where(ilo, np.clip(zl, mu / (self.kappa_sigma * sl), self.kappa_sigma * mu / sl), 0.0)
            zu = np.where(iup, np.clip(zu, mu / (self.kappa_sigma * su), self.kappa_sigma * mu / su), 0.0)
            gx = red.grad(w[:nx])
            jx = red.jac(w[:nx]) if m else sp.csr_matrix((0, nx))
            A = a_matrix(jx)

        z = red.full(w[:nx])
        mult = np.zeros(red.nlp.m)
        if m:
            mult[red.row_order] = y
        viol = self._violation(red.nlp, z)
        stuck = min(viol, viol0) > self.infeasible_violation and viol > 0.1 * viol0
        if status in ("max_iter", "error") and stuck:
            message = f"{message}; constraint violation stuck at {viol:.3e}".lstrip("; ")
            status = "infeasible"
        return SolveOutcome(status, z, mult, float(kkt), it, float(red.nlp.objective(z)), viol,
                            message, (zl, zu))

    @staticmethod
    def _violation(nlp: NlpProblem, z) -> float:
        if not nlp.m:
            return 0.0
        cz = np.asarray(nlp.constraints(z))
        return float(np.max(np.maximum(nlp.c_lower - cz, 0.0) + np.maximum(cz - nlp.c_upper, 0.0)))

    def _init_multipliers(self, g, A, nw, m):
        if m == 0:
            return np.zeros(0)
        K = sp.bmat([[sp.identity(nw), A.T], [A, None]], format="csc")
        rhs = np.concatenate((-g, np.zeros(m)))
        try:
            sol = spla.splu(K).solve(rhs)
            y = sol[nw:]
        except RuntimeError:
            return np.zeros(m)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > 1e3:
            return np.zeros(m)
        return y

    def _errors(self, r_dual, h, sl, su, zl, zu, ilo, iup, y, mu):
        n_mult = y.size + ilo.sum() + iup.sum()
        s_d = max(self.s_max, (np.abs(y).sum() + zl.sum() + zu.sum()) / max(n_mult, 1)) / self.s_max
        n_b = ilo.sum() + iup.sum()
        s_c = max(self.s_max, (zl.sum() + zu.sum()) / max(n_b, 1)) / self.s_max
        dual = np.max(np.abs(r_dual)) if r_dual.size else 0.0
        prim = np.max(np.abs(h)) if h.size else 0.0
        comp = 0.0
        if ilo.any():
            comp = max(comp, np.max(np.abs(sl[ilo] * zl[ilo] - mu)))
        if iup.any():
            comp = max(comp, np.max(np.abs(su[iup] * zu[iup] - mu)))
        return max(dual / s_d, prim, comp / s_c), (dual, prim, comp)

    def _monotone_mu(self, mu, tol, r_dual, h, sl, su, zl, zu, ilo, iup, y):
        while mu > tol / 10:
            err_mu, _ = self._errors(r_dual, h, sl, su, zl, zu, ilo, iup, y, mu)
            if err_mu > self.kappa_eps * mu:
                break
            mu = max(tol / 10, min(self.kappa_mu * mu, mu**self.theta_mu))
        return mu

    @staticmethod
    def _max_step(v, dv, tau):
        neg = dv < 0
        if not neg.any():
            return 1.0
        return float(min(1.0, np.min(-tau * v[neg] / dv[neg])))

    def _newton_step(self, W, sig, A, rhs_top, rhs_bot, delta_last):
        nw = W.shape[0]
        m = A.shape[0]
        H = (W + sp.diags(sig)).tocsr()
        delta = 0.0
        delta_c = 0.0
        for attempt in range(40):
            top = H + (sp.identity(nw) * delta if delta else 0)
            if m:
                bot = -delta_c * sp.identity(m) if delta_c else None
                K = sp.bmat([[top, A.T], [A, bot]], format="csc")
            else:
                K = sp.csc_matrix(top)
            try:
                lu = spla.splu(K, permc_spec="COLAMD")
                sol = lu.solve(np.concatenate((rhs_top, rhs_bot)))
            except RuntimeError:
                lu = None
                sol = None
            if sol is None or not np.all(np.isfinite(sol)):
                if m and delta_c == 0.0:
                    delta_c = 1e-8
                delta = self._bump(delta, delta_last)
                continue
            dw = sol[:nw]
            curv = float(dw @ (top @ dw))
            if curv < 1e-10 * float(dw @ dw):
                delta = self._bump(delta, delta_last)
                continue
            return dw, sol[nw:], delta, lu, K
        return None

    @staticmethod
    def _bump(delta, delta_last):
        if delta == 0.0:
            return 1e-4 if delta_last == 0.0 else max(1e-20, delta_last / 3.0)
        return delta * (100.0 if delta_last == 0.0 else 8.0)

    def _soc(self, lu, K, rhs_top, h_soc, nw, red, w, sl, su, tau):
        if lu is None:
            return None
        sol = lu.solve(np.concatenate((rhs_top, -h_soc)))
        if not np.all(np.isfinite(sol)):
            return None
        dw = sol[:nw]
        ilo, iup = red.has_lo, red.has_up
        a = self._max_step(np.concatenate((sl[ilo], su[iup])), np.concatenate((dw[ilo], -dw[iup])), tau)
        return dw, a
