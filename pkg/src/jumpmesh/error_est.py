"""Relative state-error estimate per mesh interval.

On each interval the state and control interpolants are sampled on a
one-point-richer LGR grid; the dynamics there are integrated with the LGR
integration matrix and compared with the state interpolant at the enriched
points and at the interval's right end.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import IntervalGrid, integ_matrix, lagrange_eval, lgr_rule
from .mesh import Mesh
from .problems import OcpProblem
from .transcription import CollocationSolution


@dataclass
class ErrorReport:
    e_max: np.ndarray  # (K,)
    points: list  # per interval: (M_k + 1,) tau locations compared
    absolute: list  # per interval: (M_k + 1, n_y)
    relative: list  # per interval: (M_k + 1, n_y)
    scale: np.ndarray  # (n_y,) denominators 1 + max |Y_i|

    def passes(self, epsilon: float) -> np.ndarray:
        return self.e_max <= epsilon

    def converged(self, epsilon: float) -> bool:
        return bool(np.all(self.e_max <= epsilon))


def interval_error(problem: OcpProblem, mesh: Mesh, solution: CollocationSolution, k: int):
    """Absolute errors on interval ``k`` at the enriched LGR points plus ``T_k``."""
    grid = mesh.grid(k)
    Yk = solution.interval_states(k)
    Uk = solution.interval_controls(k)
    m = int(mesh.degrees[k]) + 1
    rule = lgr_rule(m)
    fine = IntervalGrid.from_rule(rule, grid.left, grid.right)
    y_fine = lagrange_eval(grid.support, Yk, fine.support)  # (m+1, n_y)
    u_fine = lagrange_eval(grid.colloc_pts, Uk, fine.colloc_pts)
    t_fine = solution.time(fine.colloc_pts)
    a = np.asarray(problem.dynamics(y_fine[:-1], u_fine, t_fine), dtype=float)
    half = 0.5 * (solution.tf - solution.t0)
    y_hat = y_fine[0] + half * (integ_matrix(rule, fine) @ a)
    err = np.zeros_like(y_fine)
    err[1:] = np.abs(y_hat - y_fine[1:])
    return fine.support, err


def estimate_errors(problem: OcpProblem, mesh: Mesh, solution: CollocationSolution) -> ErrorReport:
    if solution.mesh != mesh:
        raise ValueError("solution does not belong to this mesh")
    scale = 1.0 + np.max(np.abs(solution.states), axis=0)
    pts, absolute, relative = [], [], []
    e_max = np.empty(mesh.n_intervals)
    for k in range(mesh.n_intervals):
        tau, err = interval_error(problem, mesh, solution, k)
        rel = err / scale
        pts.append(tau)
        absolute.append(err)
        relative.append(rel)
        e_max[k] = rel.max()
    return ErrorReport(e_max, pts, absolute, relative, scale)
