"""Divided-difference jump-function approximations and control discontinuity detection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .error_est import ErrorReport
from .transcription import CollocationSolution


class StencilError(ValueError):
    """The order-m stencil around t cannot produce a jump estimate."""


@dataclass(frozen=True)
class JumpConfig:
    orders: tuple = (1, 2, 3, 4, 5, 6)
    threshold: float = 0.1
    safety: float = 1.0

    def __post_init__(self):
        orders = tuple(sorted({int(m) for m in self.orders}))
        if not orders or orders[0] < 1:
            raise ValueError(f"orders must be a nonempty set of positive integers, got {self.orders!r}")
        object.__setattr__(self, "orders", orders)
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        if not self.safety >= 1.0:
            raise ValueError(f"safety factor must be >= 1, got {self.safety}")


@dataclass(frozen=True)
class Detection:
    location: float
    lower: float
    upper: float
    component: int
    minmod: float
    gap: tuple = (0, 0)  # first and last flagged gap index of the merged run


@dataclass(frozen=True)
class DetectionReport:
    detections: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.detections)

    def __iter__(self):
        return iter(self.detections)

    def __getitem__(self, i):
        return self.detections[i]

    @property
    def locations(self) -> np.ndarray:
        return np.array([d.location for d in self.detections])


def stencil(points: np.ndarray, t: float, m: int) -> np.ndarray:
    """Indices of the m+1 points closest to t, ties going to the lower index, sorted."""
    if m + 1 > points.size:
        raise StencilError(f"order {m} needs {m + 1} points, only {points.size} available")
    order = np.argsort(np.abs(points - t), kind="stable")
    return np.sort(order[: m + 1])


def divided_diff_weights(pts: np.ndarray, m: int) -> np.ndarray:
    """c_j = m! / prod_{i != j} (t_j - t_i) for the stencil ``pts``."""
    diff = pts[:, None] - pts[None, :]
    np.fill_diagonal(diff, 1.0)
    if np.any(diff == 0.0):
        raise StencilError("stencil points must be distinct")
    return math.factorial(m) / np.prod(diff, axis=1)


def divided_diff_jump(points, values, t: float, m: int) -> float:
    """Order-m divided-difference approximation of the jump of f at t."""
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    idx = stencil(points, t, m)
    pts = points[idx]
    above = pts > t
    if not above.any() or above.all():
        raise StencilError(f"stencil for order {m} at t={t} lies on one side")
    c = divided_diff_weights(pts, m)
    q = c[above].sum()
    if q == 0.0 or not math.isfinite(q):
        raise StencilError(f"normalization q vanishes for order {m} at t={t}")
    return float(c @ values[idx] / q)


def minmod(estimates: Iterable[float]) -> float:
    vals = list(estimates)
    if not vals:
        return 0.0
    if all(v > 0 for v in vals):
        return min(vals)
    if all(v < 0 for v in vals):
        return max(vals)
    return 0.0


def minmod_jump(points, values, t: float, orders=(1, 2, 3, 4, 5, 6)) -> float:
    ests = []
    for m in orders:
        try:
            ests.append(divided_diff_jump(points, values, t, m))
        except StencilError:
            continue
    return minmod(ests)


def normalize_controls(U: np.ndarray) -> np.ndarray:
    umin = U.min(axis=0)
    umax = U.max(axis=0)
    return (U - umin) / (1.0 + umax - umin)


def detect(solution: CollocationSolution, report: ErrorReport, epsilon: float,
           config: JumpConfig | None = None) -> DetectionReport:
    """Flag control discontinuities at collocation-gap midpoints of intervals that fail ``epsilon``."""
    config = config or JumpConfig()
    mesh = solution.mesh
    tau = solution.tau
    U = np.asarray(solution.controls, dtype=float)
    if U.shape[1] == 0 or tau.size < 2:
        return DetectionReport(())
    u = normalize_controls(U)
    owner = np.repeat(np.arange(mesh.n_intervals), mesh.degrees)
    failing = np.asarray(report.e_max) > epsilon
    gaps = np.flatnonzero(failing[owner[:-1]] | failing[owner[1:]])
    hits = {}
    for j in gaps:
        t = 0.5 * (tau[j] + tau[j + 1])
        best = (0.0, -1)
        for i in range(u.shape[1]):
            mm = minmod_jump(tau, u[:, i], t, config.orders)
            if abs(mm) > abs(best[0]):
                best = (mm, i)
        if abs(best[0]) >= config.threshold:
            hits[int(j)] = best
    runs: list[list[int]] = []
    for j in sorted(hits):
        if runs and runs[-1][-1] == j - 1:
            runs[-1].append(j)
        else:
            runs.append([j])
    mu = config.safety
    out = []
    for run in runs:
        peak = max(run, key=lambda j: abs(hits[j][0]))
        d = 0.5 * (tau[peak] + tau[peak + 1])
        left, right = tau[run[0]], tau[run[-1] + 1]
        lower = max(-1.0, d - mu * (d - left))
        upper = min(1.0, d + mu * (right - d))
        mm, comp = hits[peak]
        out.append(Detection(float(d), float(lower), float(upper), comp, float(mm), (run[0], run[-1])))
    return DetectionReport(tuple(out))
