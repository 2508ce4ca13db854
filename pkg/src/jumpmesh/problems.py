"""Bolza optimal control problems and the bundled benchmarks.

Evaluators are vectorized over collocation points: ``y`` has shape
``(N, n_y)``, ``u`` has shape ``(N, n_u)`` and ``t`` has shape ``(N,)``.
Endpoint functions (``mayer``, ``boundary``) take single vectors.

Fixed boundary values are expressed through ``initial_state_bounds`` and
``final_state_bounds`` (equal lower and upper bounds); ``boundary`` holds any
remaining event inequalities ``b(y0, t0, yf, tf) <= 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

INF = np.inf


def _box(lo, hi, n):
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,)).copy()
    if np.any(lo > hi):
        raise ValueError(f"lower bound exceeds upper bound: {lo} > {hi}")
    return lo, hi


@dataclass(frozen=True)
class OcpProblem:
    name: str
    n_y: int
    n_u: int
    dynamics: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    state_bounds: tuple
    control_bounds: tuple
    t0_bounds: tuple
    tf_bounds: tuple
    initial_state_bounds: tuple | None = None
    final_state_bounds: tuple | None = None
    lagrange: Optional[Callable] = None
    mayer: Optional[Callable] = None
    path: Optional[Callable] = None
    boundary: Optional[Callable] = None
    n_c: int = 0
    n_b: int = 0
    reference: dict = field(default_factory=dict)

    def __post_init__(self):
        ny, nu = self.n_y, self.n_u
        object.__setattr__(self, "state_bounds", _box(*self.state_bounds, ny))
        object.__setattr__(self, "control_bounds", _box(*self.control_bounds, nu))
        y0b = self.initial_state_bounds or self.state_bounds
        yfb = self.final_state_bounds or self.state_bounds
        object.__setattr__(self, "initial_state_bounds", _box(*y0b, ny))
        object.__setattr__(self, "final_state_bounds", _box(*yfb, ny))
        object.__setattr__(self, "t0_bounds", tuple(float(v[0]) for v in _box(*self.t0_bounds, 1)))
        object.__setattr__(self, "tf_bounds", tuple(float(v[0]) for v in _box(*self.tf_bounds, 1)))
        if (self.path is None) != (self.n_c == 0):
            raise ValueError("path constraints and n_c disagree")
        if (self.boundary is None) != (self.n_b == 0):
            raise ValueError("boundary constraints and n_b disagree")

    def check_dimensions(self) -> None:
        """Evaluate every callback once at bound midpoints and check output sizes."""
        y = _midpoint(*self.state_bounds)[None, :]
        u = _midpoint(*self.control_bounds)[None, :]
        t = np.array([_midpoint(np.array(self.t0_bounds[:1]), np.array(self.tf_bounds[1:]))[0]])
        if np.shape(self.dynamics(y, u, t)) != (1, self.n_y):
            raise ValueError(f"{self.name}: dynamics must return shape (N, {self.n_y})")
        if self.lagrange is not None and np.shape(self.lagrange(y, u, t)) != (1,):
            raise ValueError(f"{self.name}: lagrange must return shape (N,)")
        if self.path is not None and np.shape(self.path(y, u, t)) != (1, self.n_c):
            raise ValueError(f"{self.name}: path must return shape (N, {self.n_c})")
        if self.boundary is not None and np.shape(self.boundary(y[0], t[0], y[0], t[0])) != (self.n_b,):
            raise ValueError(f"{self.name}: boundary must return shape ({self.n_b},)")


def _midpoint(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    both = np.isfinite(lo) & np.isfinite(hi)
    mid = np.where(both, 0.5 * (np.where(both, lo, 0.0) + np.where(both, hi, 0.0)), 0.0)
    mid = np.where(np.isfinite(lo) & ~np.isfinite(hi), np.maximum(lo, 0.0), mid)
    return np.where(~np.isfinite(lo) & np.isfinite(hi), np.minimum(hi, 0.0), mid)


ARM_LENGTH = 5.0


def arm_inertia_phi(y1, length: float = ARM_LENGTH):
    return ((length - y1) ** 3 + y1**3) / 3.0


def make_robot_arm() -> OcpProblem:
    """Minimum-time reorientation of a robotic arm (three torque inputs)."""
    L = ARM_LENGTH

    def dynamics(y, u, t):
        i_phi = arm_inertia_phi(y[:, 0], L)
        i_theta = i_phi * np.sin(y[:, 4]) ** 2
        return np.column_stack(
            (y[:, 1], u[:, 0] / L, y[:, 3], u[:, 1] / i_theta, y[:, 5], u[:, 2] / i_phi)
        )

    y0 = np.array([4.5, 0.0, 0.0, 0.0, math.pi / 4, 0.0])
    yf = np.array([4.5, 0.0, 2 * math.pi / 3, 0.0, math.pi / 4, 0.0])
    return OcpProblem(
        name="robot-arm",
        n_y=6,
        n_u=3,
        dynamics=dynamics,
        mayer=lambda y0, t0, yf, tf: tf,
        state_bounds=(
            [0.0, -10.0, -math.pi, -10.0, 0.1, -10.0],
            [L, 10.0, math.pi, 10.0, math.pi - 0.1, 10.0],
        ),
        control_bounds=(-1.0, 1.0),
        initial_state_bounds=(y0, y0),
        final_state_bounds=(yf, yf),
        t0_bounds=(0.0, 0.0),
        tf_bounds=(0.1, 20.0),
        reference={"switches": [-0.5, -0.3882, 0.0, 0.3882, 0.5]},
    )


def _di_dynamics(y, u, t):
    return np.column_stack((y[:, 1], u[:, 0]))


def make_min_time_double_integrator(d: float = 1.0) -> OcpProblem:
    """Rest-to-rest transfer over distance ``d`` in minimum time, ``|u| <= 1``.

    Optimal: ``tf = 2 sqrt(d)``, ``u = +1`` then ``-1`` with the switch at tau = 0.
    """
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    rd = math.sqrt(d)
    box = 10.0 * (1.0 + d)
    return OcpProblem(
        name="min-time-di",
        n_y=2,
        n_u=1,
        dynamics=_di_dynamics,
        mayer=lambda y0, t0, yf, tf: tf,
        state_bounds=([-box, -box], [box, box]),
        control_bounds=(-1.0, 1.0),
        initial_state_bounds=([0.0, 0.0], [0.0, 0.0]),
        final_state_bounds=([d, 0.0], [d, 0.0]),
        t0_bounds=(0.0, 0.0),
        tf_bounds=(0.1 * rd, 8.0 * rd),
        reference={"tf": 2.0 * rd, "cost": 2.0 * rd, "switches": [0.0]},
    )


def make_min_energy_double_integrator() -> OcpProblem:
    """Minimize the integral of u^2/2 moving (0, 0) -> (1, 0) on t in [0, 1].

    Optimal: ``u(t) = 6 - 12 t``, cost 6.
    """
    return OcpProblem(
        name="min-energy-di",
        n_y=2,
        n_u=1,
        dynamics=_di_dynamics,
        lagrange=lambda y, u, t: 0.5 * u[:, 0] ** 2,
        state_bounds=([-10.0, -10.0], [10.0, 10.0]),
        control_bounds=(-INF, INF),
        initial_state_bounds=([0.0, 0.0], [0.0, 0.0]),
        final_state_bounds=([1.0, 0.0], [1.0, 0.0]),
        t0_bounds=(0.0, 0.0),
        tf_bounds=(1.0, 1.0),
        reference={"cost": 6.0, "switches": []},
    )


PROBLEMS: dict[str, Callable[[], OcpProblem]] = {
    "robot-arm": make_robot_arm,
    "min-time-di": make_min_time_double_integrator,
    "min-energy-di": make_min_energy_double_integrator,
}


def get_problem(name: str) -> OcpProblem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {', '.join(sorted(PROBLEMS))}") from None
    return factory()
