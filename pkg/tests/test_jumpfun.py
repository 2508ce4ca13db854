import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jumpmesh.error_est import ErrorReport
from jumpmesh.jumpfun import (
    JumpConfig,
    StencilError,
    detect,
    divided_diff_jump,
    divided_diff_weights,
    minmod,
    minmod_jump,
    normalize_controls,
    stencil,
)
from jumpmesh.mesh import Mesh
from jumpmesh.transcription import CollocationSolution

ORDERS = (1, 2, 3, 4, 5, 6)


def test_hand_examples():
    np.testing.assert_allclose(divided_diff_weights(np.array([0.0, 1.0]), 1), [-1.0, 1.0], atol=1e-12)
    assert divided_diff_jump([0.0, 1.0], [0.0, 1.0], 0.5, 1) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(divided_diff_weights(np.array([0.0, 1.0, 2.0]), 2), [1.0, -2.0, 1.0], atol=1e-12)
    assert divided_diff_jump([0.0, 1.0, 2.0], [0.0, 2.0, 4.0], 0.5, 2) == pytest.approx(0.0, abs=1e-12)
    assert divided_diff_jump([0.0, 1.0, 2.0], [0.0, 0.0, 1.0], 1.5, 2) == pytest.approx(1.0, abs=1e-12)


def test_weights_annihilate_low_degree_polynomials():
    pts = np.array([-0.3, 0.1, 0.2, 0.55, 0.9])
    c = divided_diff_weights(pts, 4)
    for k in range(4):
        assert abs(c @ pts**k) < 1e-9 * np.abs(c).max()
    assert c @ pts**4 == pytest.approx(24.0, rel=1e-10)


def test_stencil_closest_points_and_ties():
    pts = np.arange(6.0)
    assert stencil(pts, 2.5, 1).tolist() == [2, 3]
    # Three points around a midpoint: the tie between 1 and 4 goes to the lower index.
    assert stencil(pts, 2.5, 2).tolist() == [1, 2, 3]
    with pytest.raises(StencilError):
        stencil(pts, 2.5, 6)


def test_one_sided_stencil_is_refused():
    with pytest.raises(StencilError):
        divided_diff_jump([0.0, 1.0, 2.0], [0.0, 1.0, 2.0], -0.5, 1)
    # Orders whose stencils fail are dropped from the minmod.
    assert minmod_jump([0.0, 1.0], [0.0, 1.0], 0.5, ORDERS) == pytest.approx(1.0)


def test_minmod():
    assert minmod([0.3, 0.1, 0.2]) == 0.1
    assert minmod([-0.3, -0.1]) == -0.1
    assert minmod([0.3, -0.1]) == 0.0
    assert minmod([0.2, 0.0]) == 0.0
    assert minmod([]) == 0.0


@pytest.mark.parametrize("fun", [np.sin, np.exp, lambda t: t**3 - 2 * t**2 + 0.5 * t])
def test_smooth_functions_stay_small(fun):
    t = np.arange(0.0, 2.0 + 1e-12, 1e-2)
    vals = fun(t)
    mids = 0.5 * (t[5:-6] + t[6:-5])
    assert max(abs(minmod_jump(t, vals, x, ORDERS)) for x in mids) < 1e-3


@settings(max_examples=40, deadline=None)
@given(frac=st.floats(0.05, 0.95), h=st.sampled_from([1e-2, 5e-3, 2e-3]))
def test_unit_step_at_adjacent_midpoint(frac, h):
    t = np.arange(0.0, 1.0 + 1e-12, h)
    j = t.size // 2
    s = t[j] + frac * h
    vals = (t > s).astype(float)
    x = 0.5 * (t[j] + t[j + 1])
    assert abs(minmod_jump(t, vals, x, ORDERS) - 1.0) <= 0.1


def step_error(h):
    t = np.arange(0.0, 1.0 + 1e-12, h)
    j = t.size // 2
    s = t[j] + 0.37 * h
    vals = (t > s) - np.exp(t)
    return abs(minmod_jump(t, vals, 0.5 * (t[j] + t[j + 1]), ORDERS) - 1.0)


def test_step_first_order_convergence():
    errs = [step_error(h) for h in (1e-2, 5e-3, 2.5e-3)]
    for a, b in zip(errs, errs[1:]):
        assert 2 / 1.5 <= a / b <= 2 * 1.5


def test_config_validation():
    assert JumpConfig(orders=(3, 1, 3)).orders == (1, 3)
    for bad in ({"orders": ()}, {"orders": (0, 1)}, {"threshold": 0.0}, {"threshold": 1.0}, {"safety": 0.5}):
        with pytest.raises(ValueError):
            JumpConfig(**bad)


def test_normalize_controls():
    U = np.array([[-1.0, 5.0], [1.0, 5.0], [0.0, 5.0]])
    out = normalize_controls(U)
    np.testing.assert_allclose(out[:, 0], [0.0, 2 / 3, 1 / 3])
    np.testing.assert_allclose(out[:, 1], 0.0)


def synthetic(controls_fn, mesh=None, failing=True):
    mesh = mesh or Mesh.uniform(4, 4)
    tau = mesh.collocation_points()
    U = controls_fn(tau)
    sol = CollocationSolution(mesh, np.zeros((tau.size + 1, 1)), U, 0.0, 1.0)
    e = np.full(mesh.n_intervals, 1e-3 if failing else 1e-9)
    return sol, ErrorReport(e, [], [], [], np.ones(1)), tau


def test_constant_control_gives_no_detection():
    sol, rep, _ = synthetic(lambda tau: np.full((tau.size, 2), 0.7))
    assert len(detect(sol, rep, 1e-6)) == 0


def test_unit_step_detection_with_unit_safety():
    sol, rep, tau = synthetic(lambda tau: np.where(tau < 0.3, 1.0, -1.0)[:, None])
    out = detect(sol, rep, 1e-6, JumpConfig(safety=1.0))
    assert len(out) == 1
    j = np.searchsorted(tau, 0.3) - 1
    det = out[0]
    assert det.lower == tau[j] and det.upper == tau[j + 1]
    assert det.location == pytest.approx(0.5 * (tau[j] + tau[j + 1]))
    assert det.minmod < 0 and det.component == 0


def test_safety_factor_widens_bounds():
    sol, rep, tau = synthetic(lambda tau: np.where(tau < 0.3, 1.0, -1.0)[:, None])
    a = detect(sol, rep, 1e-6, JumpConfig(safety=1.0))[0]
    b = detect(sol, rep, 1e-6, JumpConfig(safety=2.0))[0]
    assert b.location == a.location
    assert b.upper - b.location == pytest.approx(2 * (a.upper - a.location))
    assert a.location - b.lower == pytest.approx(2 * (a.location - a.lower))


def test_passing_intervals_are_not_examined():
    sol, rep, _ = synthetic(lambda tau: np.where(tau < 0.3, 1.0, -1.0)[:, None], failing=False)
    assert len(detect(sol, rep, 1e-6)) == 0


def test_strongest_component_reported():
    sol, rep, _ = synthetic(lambda tau: np.column_stack((np.where(tau < -0.45, 0.0, 0.3), np.where(tau < -0.45, 0.0, 5.0))))
    out = detect(sol, rep, 1e-6)
    assert len(out) == 1 and out[0].component == 1


def test_two_jumps_two_detections():
    sol, rep, _ = synthetic(lambda tau: np.where(np.abs(tau) < 0.4, 1.0, -1.0)[:, None])
    out = detect(sol, rep, 1e-6)
    assert len(out) == 2
    assert out[0].minmod > 0 > out[1].minmod
    assert out.locations.tolist() == sorted(out.locations.tolist())
