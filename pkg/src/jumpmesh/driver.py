"""The mesh-refinement loop: solve, estimate errors, detect, refine, repeat."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .error_est import ErrorReport, estimate_errors
from .jumpfun import DetectionReport, JumpConfig, detect
from .mesh import P_MAX, P_MIN, Mesh
from .nlp import InteriorPointSolver, NlpSolver, SolverOptions
from .problems import OcpProblem, _midpoint
from .refine import RefinementLog, refine
from .transcription import CollocationSolution, Transcription

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    epsilon: float = 1e-6
    max_iterations: int = 20
    initial_intervals: int = 10
    initial_degree: int = 4
    jump: JumpConfig = field(default_factory=JumpConfig)
    solver: SolverOptions = field(default_factory=SolverOptions)
    detect: bool = True
    smooth_method: str = "bundled-ph"
    p_min: int = P_MIN
    p_max: int = P_MAX
    warm_mu_init: float = 1e-3

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.initial_intervals < 1:
            raise ValueError("need at least one initial interval")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        if self.smooth_method != "bundled-ph":
            raise ValueError(f"unknown smooth refinement method {self.smooth_method!r}")

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "max_iterations": self.max_iterations,
            "initial_intervals": self.initial_intervals,
            "initial_degree": self.initial_degree,
            "orders": list(self.jump.orders),
            "threshold": self.jump.threshold,
            "safety": self.jump.safety,
            "detect": self.detect,
            "smooth_method": self.smooth_method,
            "p_min": self.p_min,
            "p_max": self.p_max,
            "kkt_tolerance": self.solver.kkt_tolerance,
            "solver_max_iterations": self.solver.max_iterations,
            "fd_step_scale": self.solver.fd_step_scale,
            "mu_init": self.solver.mu_init,
            "warm_mu_init": self.warm_mu_init,
        }


@dataclass
class IterationRecord:
    iteration: int
    mesh: Mesh
    e_max: np.ndarray
    detections: DetectionReport
    status: str
    nlp_iterations: int
    kkt_residual: float
    cost: float
    t0: float
    tf: float
    wall_time: float
    refinement: RefinementLog | None = None


@dataclass
class RunHistory:
    problem: str
    config: RunConfig
    records: list = field(default_factory=list)
    converged: bool = False
    message: str = ""

    def __len__(self):
        return len(self.records)

    @property
    def iterations(self) -> int:
        """Mesh refinement iterations performed (the final mesh index M)."""
        return len(self.records) - 1

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]

    @property
    def wall_time(self) -> float:
        return float(sum(r.wall_time for r in self.records))


def initial_guess(problem: OcpProblem, mesh: Mesh) -> np.ndarray:
    """Straight line in tau between the endpoint values; controls and times at bound midpoints."""
    tr = Transcription(problem, mesh)
    lay = tr.layout
    y0 = _midpoint(*problem.initial_state_bounds)
    yf = _midpoint(*problem.final_state_bounds)
    s = 0.5 * (np.append(mesh.collocation_points(), 1.0) + 1.0)
    z = np.empty(lay.size)
    z[lay.y_index] = y0 + (yf - y0) * s[:, None]
    z[lay.u_index] = _midpoint(*problem.control_bounds)
    z[lay.t0_index] = _midpoint(np.array(problem.t0_bounds[:1]), np.array(problem.t0_bounds[1:]))[0]
    z[lay.tf_index] = _midpoint(np.array(problem.tf_bounds[:1]), np.array(problem.tf_bounds[1:]))[0]
    lo, hi = tr.variable_bounds()
    return np.clip(z, lo, hi)


def warm_start(prev: CollocationSolution, new_mesh: Mesh, problem: OcpProblem) -> np.ndarray:
    """Interpolate a previous solution onto ``new_mesh`` and clip to the variable bounds."""
    tr = Transcription(problem, new_mesh)
    lay = tr.layout
    tau = new_mesh.collocation_points()
    z = np.empty(lay.size)
    z[lay.y_index] = prev.state_at(np.append(tau, 1.0))
    z[lay.u_index] = prev.control_at(tau)
    z[lay.t0_index] = prev.t0
    z[lay.tf_index] = prev.tf
    lo, hi = tr.variable_bounds()
    return np.clip(z, lo, hi)


def solve_on_mesh(problem: OcpProblem, mesh: Mesh, z0, options: SolverOptions,
                  solver: NlpSolver | None = None):
    tr = Transcription(problem, mesh, options.fd_step_scale)
    out = (solver or InteriorPointSolver()).solve(tr.nlp(), z0, options)
    sol = tr.unpack(out.z)
    sol.status = out.status
    sol.multipliers = out.multipliers
    return sol, out


def run(problem: OcpProblem, config: RunConfig | None = None, solver: NlpSolver | None = None,
        initial_mesh: Mesh | None = None) -> tuple[RunHistory, CollocationSolution | None]:
    config = config or RunConfig()
    problem.check_dimensions()
    mesh = initial_mesh or Mesh.uniform(config.initial_intervals, config.initial_degree)
    history = RunHistory(problem.name, config)
    z0 = initial_guess(problem, mesh)
    prev: CollocationSolution | None = None
    M = 0
    while True:
        start = time.perf_counter()
        opts = config.solver if prev is None else replace(config.solver, mu_init=config.warm_mu_init)
        sol, out = solve_on_mesh(problem, mesh, z0, opts, solver)
        if not out.usable and prev is not None:
            # A cold barrier from the same interpolated point is slower but more forgiving.
            sol, out = solve_on_mesh(problem, mesh, z0, config.solver, solver)
        report: ErrorReport | None = None
        detections = DetectionReport(())
        if out.usable:
            report = estimate_errors(problem, mesh, sol)
        record = IterationRecord(
            M, mesh, report.e_max if report is not None else np.full(mesh.n_intervals, np.nan),
            detections, out.status, out.iterations, out.kkt_residual, sol.cost, sol.t0, sol.tf, 0.0,
        )
        history.records.append(record)
        log.info("iteration %d: K=%d P=%d status=%s cost=%.12g max e=%.3e", M, mesh.n_intervals,
                 mesh.total_points, out.status, sol.cost, np.max(record.e_max))
        if report is None:
            record.wall_time = time.perf_counter() - start
            history.message = f"NLP solve failed on iteration {M}: {out.status} {out.message}".strip()
            return history, prev
        if report.converged(config.epsilon):
            record.wall_time = time.perf_counter() - start
            history.converged = True
            return history, sol
        if M >= config.max_iterations:
            record.wall_time = time.perf_counter() - start
            history.message = f"tolerance not met after {M} refinement iterations"
            return history, sol
        if config.detect:
            detections = detect(sol, report, config.epsilon, config.jump)
            record.detections = detections
        new_mesh, rlog = refine(mesh, report, detections, config.epsilon, M, config.p_min, config.p_max)
        record.refinement = rlog
        z0 = warm_start(sol, new_mesh, problem)
        record.wall_time = time.perf_counter() - start
        prev, mesh = sol, new_mesh
        M += 1
