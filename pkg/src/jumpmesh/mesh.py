"""Mesh on the computational domain [-1, 1] with smooth/nonsmooth segment labels."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .basis import IntervalGrid, lgr_rule

P_MIN = 3
P_MAX = 14
BRACKET_DEGREE = 4
SMOOTH = -1


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    kind: Literal["smooth", "nonsmooth"]
    start: int
    stop: int  # exclusive interval index
    bracket_point: float | None = None

    @property
    def interval_range(self) -> range:
        return range(self.start, self.stop)


class Mesh:
    """Interval boundaries ``fractions`` (K+1), LGR point counts ``degrees`` (K)
    and per-interval ``labels``: ``SMOOTH`` or a bracket id shared by the two
    intervals of a nonsmooth segment.

    Bracket ids are renumbered 0, 1, ... in order of appearance so that two
    meshes with the same structure compare equal.
    """

    __slots__ = ("fractions", "degrees", "labels")

    def __init__(self, fractions, degrees, labels=None):
        fr = np.array(fractions, dtype=float)
        deg = np.array(degrees, dtype=int)
        if labels is None:
            labels = [SMOOTH] * deg.size
        lab = np.array(labels, dtype=int)
        remap: dict[int, int] = {}
        for i, v in enumerate(lab):
            if v != SMOOTH:
                lab[i] = remap.setdefault(int(v), len(remap))
        fr.setflags(write=False)
        deg.setflags(write=False)
        lab.setflags(write=False)
        object.__setattr__(self, "fractions", fr)
        object.__setattr__(self, "degrees", deg)
        object.__setattr__(self, "labels", lab)

    def __setattr__(self, name, value):
        raise AttributeError("Mesh is immutable")

    @classmethod
    def uniform(cls, n_intervals: int, degree: int) -> "Mesh":
        if n_intervals < 1:
            raise MeshError("need at least one interval")
        return cls(np.linspace(-1.0, 1.0, n_intervals + 1), [degree] * n_intervals)

    @property
    def n_intervals(self) -> int:
        return int(self.degrees.size)

    @property
    def total_points(self) -> int:
        return int(self.degrees.sum())

    def interval(self, k: int) -> tuple[float, float]:
        return float(self.fractions[k]), float(self.fractions[k + 1])

    def is_smooth(self, k: int) -> bool:
        return self.labels[k] == SMOOTH

    def grid(self, k: int) -> IntervalGrid:
        return IntervalGrid.from_rule(lgr_rule(int(self.degrees[k])), *self.interval(k))

    def grids(self) -> list[IntervalGrid]:
        return [self.grid(k) for k in range(self.n_intervals)]

    def collocation_points(self) -> np.ndarray:
        """All LGR points of the mesh, in order, on [-1, 1)."""
        return np.concatenate([g.colloc_pts for g in self.grids()])

    @property
    def segments(self) -> list[Segment]:
        out: list[Segment] = []
        k = 0
        K = self.n_intervals
        while k < K:
            if self.labels[k] == SMOOTH:
                j = k
                while j < K and self.labels[j] == SMOOTH:
                    j += 1
                out.append(Segment("smooth", k, j))
            else:
                j = k
                while j < K and self.labels[j] == self.labels[k]:
                    j += 1
                out.append(Segment("nonsmooth", k, j, float(self.fractions[k + 1])))
            k = j
        return out

    def segment_of(self, k: int) -> Segment:
        for seg in self.segments:
            if seg.start <= k < seg.stop:
                return seg
        raise IndexError(k)

    def locate(self, tau: float) -> int:
        """Index of the interval [T_{k-1}, T_k) holding ``tau`` (last interval for tau = 1)."""
        k = int(np.searchsorted(self.fractions, tau, side="right")) - 1
        return min(max(k, 0), self.n_intervals - 1)

    def validate(self, p_min: int = P_MIN, p_max: int = P_MAX) -> None:
        fr, deg, lab = self.fractions, self.degrees, self.labels
        if fr.ndim != 1 or fr.size != deg.size + 1 or lab.size != deg.size:
            raise MeshError("inconsistent mesh array sizes")
        if deg.size == 0:
            raise MeshError("mesh has no intervals")
        if fr[0] != -1.0 or fr[-1] != 1.0:
            raise MeshError(f"mesh must span [-1, 1], got [{fr[0]}, {fr[-1]}]")
        if np.any(np.diff(fr) <= 0.0):
            raise MeshError("mesh fractions must be strictly increasing")
        if deg.min() < p_min or deg.max() > p_max:
            raise MeshError(f"degrees must lie in [{p_min}, {p_max}], got {deg.tolist()}")
        for seg in self.segments:
            if seg.kind == "nonsmooth" and seg.stop - seg.start != 2:
                raise MeshError(f"nonsmooth segment at interval {seg.start} spans {seg.stop - seg.start} intervals")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mesh):
            return NotImplemented
        return (
            np.array_equal(self.fractions, other.fractions)
            and np.array_equal(self.degrees, other.degrees)
            and np.array_equal(self.labels, other.labels)
        )

    def __hash__(self):
        return hash((self.fractions.tobytes(), self.degrees.tobytes(), self.labels.tobytes()))

    def __repr__(self) -> str:
        return (
            f"Mesh(K={self.n_intervals}, P={self.total_points}, "
            f"nonsmooth={sum(s.kind == 'nonsmooth' for s in self.segments)})"
        )

    def to_dict(self) -> dict:
        return {
            "fractions": self.fractions.tolist(),
            "degrees": self.degrees.tolist(),
            "labels": self.labels.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mesh":
        return cls(d["fractions"], d["degrees"], d["labels"])
