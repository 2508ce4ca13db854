import math

import numpy as np
import pytest

from jumpmesh.driver import RunConfig, initial_guess, run, warm_start
from jumpmesh.mesh import Mesh
from jumpmesh.nlp import NlpSolver, SolveOutcome
from jumpmesh.problems import get_problem, make_robot_arm
from jumpmesh.transcription import Transcription


def test_initial_guess_robot_arm():
    prob = make_robot_arm()
    mesh = Mesh.uniform(2, 3)
    tr = Transcription(prob, mesh)
    sol = tr.unpack(initial_guess(prob, mesh))
    y_mid = sol.state_at(np.array([0.0]))[0]
    assert y_mid[2] == pytest.approx(math.pi / 3)
    np.testing.assert_allclose(sol.states[:, 4], math.pi / 4)
    np.testing.assert_array_equal(sol.controls, 0.0)
    assert sol.t0 == 0.0 and sol.tf == pytest.approx(10.05)


def test_initial_guess_unbounded_control_is_zero():
    prob = get_problem("min-energy-di")
    sol = Transcription(prob, Mesh.uniform(2, 3)).unpack(initial_guess(prob, Mesh.uniform(2, 3)))
    np.testing.assert_array_equal(sol.controls, 0.0)


@pytest.fixture(scope="module")
def coarse_robot_solution():
    from jumpmesh.driver import solve_on_mesh
    from jumpmesh.nlp import SolverOptions

    prob = make_robot_arm()
    mesh = Mesh.uniform(4, 4)
    sol, out = solve_on_mesh(prob, mesh, initial_guess(prob, mesh), SolverOptions())
    assert out.usable
    return prob, sol


def test_warm_start_same_mesh(coarse_robot_solution):
    prob, sol = coarse_robot_solution
    tr = Transcription(prob, sol.mesh)
    z = warm_start(sol, sol.mesh, prob)
    lo, hi = tr.variable_bounds()
    np.testing.assert_array_equal(z, np.clip(tr.pack(sol), lo, hi))


def test_warm_start_raised_degree(coarse_robot_solution):
    prob, sol = coarse_robot_solution
    new_mesh = Mesh(sol.mesh.fractions, [4, 7, 4, 4])
    new = Transcription(prob, new_mesh).unpack(warm_start(sol, new_mesh, prob))
    k = slice(4, 11)
    np.testing.assert_allclose(new.states[k], sol.state_at(new.tau_nodes[k]), atol=1e-12)


def test_warm_start_subdivided(coarse_robot_solution):
    prob, sol = coarse_robot_solution
    fr = sol.mesh.fractions
    new_mesh = Mesh(np.insert(fr, 2, 0.5 * (fr[1] + fr[2])), [4] * 5)
    new = Transcription(prob, new_mesh).unpack(warm_start(sol, new_mesh, prob))
    mid = 0.5 * (fr[1] + fr[2])
    np.testing.assert_allclose(new.interval_states(1)[-1], sol.state_at(np.array([mid]))[0], atol=1e-12)


def test_min_energy_run(min_energy_run):
    hist, sol = min_energy_run
    assert hist.converged
    assert all(len(r.detections) == 0 for r in hist.records)
    assert sol.cost == pytest.approx(6.0, abs=1e-6)
    assert hist.final.status in ("optimal", "acceptable")


def test_min_time_run(min_time_run):
    hist, sol = min_time_run
    assert hist.converged
    assert len(hist.records[0].detections) >= 1
    segs = [s for s in sol.mesh.segments if s.kind == "nonsmooth"]
    assert len(segs) == 1
    lo, hi = sol.mesh.fractions[segs[0].start], sol.mesh.fractions[segs[0].stop]
    assert abs(segs[0].bracket_point) <= hi - lo
    np.testing.assert_allclose(sol.controls[sol.tau < lo - 1e-3], 1.0, atol=1e-4)
    np.testing.assert_allclose(sol.controls[sol.tau > hi + 1e-3], -1.0, atol=1e-4)


def test_min_time_brackets_contract(min_time_run):
    hist, _ = min_time_run
    widths = []
    for rec in hist.records:
        segs = [s for s in rec.mesh.segments if s.kind == "nonsmooth"]
        if segs:
            widths.append(rec.mesh.fractions[segs[0].stop] - rec.mesh.fractions[segs[0].start])
    assert len(widths) >= 2
    assert all(b <= a for a, b in zip(widths, widths[1:]))


def test_robot_arm_run(robot_arm_run):
    hist, sol = robot_arm_run
    assert hist.converged
    assert sum(s.kind == "nonsmooth" for s in sol.mesh.segments) == 5
    assert hist.iterations <= 20


def test_termination_and_flag():
    hist, sol = run(get_problem("min-time-di"), RunConfig(max_iterations=0, initial_intervals=9))
    assert len(hist) == 1 and not hist.converged
    assert "not met" in hist.message
    assert hist.converged == bool(np.all(hist.final.e_max <= 1e-6))


class BrokenSolver(NlpSolver):
    def solve(self, nlp, z0, options=None):
        return SolveOutcome("error", np.asarray(z0, dtype=float), np.zeros(nlp.m), math.inf, 0,
                            message="evaluator blew up")


def test_solver_failure_aborts_with_partial_history():
    hist, sol = run(get_problem("min-energy-di"), RunConfig(), solver=BrokenSolver())
    assert not hist.converged and sol is None
    assert len(hist) == 1 and hist.final.status == "error"
    assert "evaluator blew up" in hist.message


def test_config_validation():
    for bad in ({"epsilon": 0.0}, {"initial_intervals": 0}, {"max_iterations": -1}, {"smooth_method": "h"}):
        with pytest.raises(ValueError):
            RunConfig(**bad)
    d = RunConfig().as_dict()
    assert d["epsilon"] == 1e-6 and d["orders"] == [1, 2, 3, 4, 5, 6] and d["max_iterations"] == 20
