"""Mesh refinement: bracketing of detected discontinuities (nonsmooth pass) and
ph refinement of smooth segments (smooth pass).

Every structural change is a splice that replaces a contiguous run of
intervals by new ones; the splices are recorded in a :class:`RefinementLog`
so that the new mesh can be rebuilt from the old one exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .error_est import ErrorReport
from .jumpfun import Detection, DetectionReport
from .mesh import BRACKET_DEGREE, P_MAX, P_MIN, SMOOTH, Mesh, MeshError, Segment

COLLISION_TOL = 1e-12
MIN_WIDTH_ABS = 1e-6
MIN_WIDTH_REL = 1e-3

ACTION_KINDS = ("bracket_created", "bracket_updated", "bracket_relabeled", "smooth_subdivided", "degree_raised")


@dataclass(frozen=True)
class Action:
    """Replace intervals ``start:stop`` by intervals with the given boundaries, degrees and labels."""

    kind: str
    start: int
    stop: int
    fractions: tuple
    degrees: tuple
    labels: tuple

    def to_line(self, iteration: int = 0) -> str:
        fr = " ".join(repr(float(x)) for x in self.fractions)
        dg = " ".join(str(int(x)) for x in self.degrees)
        lb = " ".join(str(int(x)) for x in self.labels)
        return f"{iteration} {self.kind} {self.start} {self.stop} | {fr} | {dg} | {lb}"

    @classmethod
    def from_line(cls, line: str) -> tuple[int, "Action"]:
        head, fr, dg, lb = (part.strip() for part in line.split("|"))
        it, kind, start, stop = head.split()
        if kind not in ACTION_KINDS:
            raise ValueError(f"unknown refinement action {kind!r}")
        return int(it), cls(
            kind, int(start), int(stop),
            tuple(float(x) for x in fr.split()),
            tuple(int(x) for x in dg.split()),
            tuple(int(x) for x in lb.split()),
        )


@dataclass
class RefinementLog:
    actions: list = field(default_factory=list)
    iteration: int = 0

    def __len__(self):
        return len(self.actions)

    def kinds(self) -> list[str]:
        return [a.kind for a in self.actions]

    def replay(self, mesh: Mesh) -> Mesh:
        work = _Work.from_mesh(mesh)
        for act in self.actions:
            work.apply(act)
        return work.to_mesh()

    def to_text(self) -> str:
        return "".join(a.to_line(self.iteration) + "\n" for a in self.actions)

    @classmethod
    def from_text(cls, text: str) -> "RefinementLog":
        log = cls()
        for line in text.splitlines():
            if line.strip():
                log.iteration, act = Action.from_line(line)
                log.actions.append(act)
        return log


class _Work:
    """Mutable mesh used during one refinement pass."""

    def __init__(self, fr, deg, lab, log: RefinementLog | None = None):
        self.fr = [float(x) for x in fr]
        self.deg = [int(x) for x in deg]
        self.lab = [int(x) for x in lab]
        self.log = log if log is not None else RefinementLog()
        self.next_id = max([v for v in self.lab if v != SMOOTH], default=-1) + 1

    @classmethod
    def from_mesh(cls, mesh: Mesh, log=None) -> "_Work":
        return cls(mesh.fractions, mesh.degrees, mesh.labels, log)

    def to_mesh(self) -> Mesh:
        return Mesh(self.fr, self.deg, self.lab)

    def new_id(self) -> int:
        self.next_id += 1
        return self.next_id - 1

    def apply(self, act: Action) -> None:
        a, b = act.start, act.stop
        if act.fractions[0] != self.fr[a] or act.fractions[-1] != self.fr[b]:
            raise MeshError("splice does not match the current mesh boundaries")
        self.fr[a:b + 1] = list(act.fractions)
        self.deg[a:b] = list(act.degrees)
        self.lab[a:b] = list(act.labels)

    def splice(self, kind, a, b, fractions, degrees, labels) -> None:
        act = Action(kind, a, b, tuple(float(x) for x in fractions),
                     tuple(int(x) for x in degrees), tuple(int(x) for x in labels))
        self.apply(act)
        self.log.actions.append(act)
        used = [v for v in labels if v != SMOOTH]
        if used:
            self.next_id = max(self.next_id, max(used) + 1)

    def index_of(self, x: float) -> int | None:
        """Index of the boundary equal to ``x`` (within the collision tolerance)."""
        i = int(np.argmin(np.abs(np.asarray(self.fr) - x)))
        return i if abs(self.fr[i] - x) <= COLLISION_TOL else None

    def containing(self, x: float) -> int:
        k = int(np.searchsorted(self.fr, x, side="right")) - 1
        return min(max(k, 0), len(self.deg) - 1)

    def segment_bounds(self, x: float) -> tuple[float, float, bool]:
        """(start, end, smooth?) of the segment holding ``x``."""
        k = self.containing(x)
        if self.lab[k] == SMOOTH:
            a = k
            while a > 0 and self.lab[a - 1] == SMOOTH:
                a -= 1
            b = k
            while b + 1 < len(self.lab) and self.lab[b + 1] == SMOOTH:
                b += 1
            return self.fr[a], self.fr[b + 1], True
        a = k
        while a > 0 and self.lab[a - 1] == self.lab[k]:
            a -= 1
        b = k
        while b + 1 < len(self.lab) and self.lab[b + 1] == self.lab[k]:
            b += 1
        return self.fr[a], self.fr[b + 1], False


def min_width(det: Detection) -> float:
    return max(MIN_WIDTH_ABS, MIN_WIDTH_REL * (det.upper - det.lower))


def _segment_span(mesh: Mesh, seg: Segment) -> tuple[float, float]:
    return float(mesh.fractions[seg.start]), float(mesh.fractions[seg.stop])


def group_by_segment(detections: DetectionReport, mesh: Mesh) -> dict:
    """Map each segment's start index to the (sorted) detections lying in it."""
    groups: dict[int, list] = {}
    for det in sorted(detections, key=lambda d: d.location):
        seg = mesh.segment_of(mesh.locate(det.location))
        groups.setdefault(seg.start, []).append(det)
    return groups


def adjust_bounds(detections: DetectionReport, mesh: Mesh) -> DetectionReport:
    """Confine bounds to the owning segment and split overlaps between neighbors at the midpoint."""
    out = []
    for start, dets in group_by_segment(detections, mesh).items():
        lo, hi = _segment_span(mesh, mesh.segment_of(start))
        dets = [replace(d, lower=max(lo, d.lower), upper=min(hi, d.upper)) for d in dets]
        for i in range(len(dets) - 1):
            a, b = dets[i], dets[i + 1]
            if a.upper > b.lower:
                mid = 0.5 * (a.location + b.location)
                dets[i] = replace(a, upper=mid)
                dets[i + 1] = replace(b, lower=mid)
        out.extend(dets)
    out.sort(key=lambda d: d.location)
    return DetectionReport(tuple(out))


def _widen(det: Detection, lo: float, hi: float) -> tuple[float, float, float]:
    """Bracket bounds around ``det.location`` respecting the minimum half-width and ``[lo, hi]``."""
    w = min_width(det)
    d = det.location
    lower = max(lo, min(det.lower, d - w))
    upper = min(hi, max(det.upper, d + w))
    if lower - lo < w:
        lower = lo
    if hi - upper < w:
        upper = hi
    return lower, d, upper


def _nudge(det: Detection, lo: float, hi: float) -> Detection | None:
    """Keep ``det`` at least the minimum width away from ``lo`` and ``hi`` (None if it cannot fit)."""
    w = min_width(det)
    if hi - lo < 2 * w:
        return None
    d = min(max(det.location, lo + w), hi - w)
    return det if d == det.location else replace(det, location=d)


def _bracket_one(work: _Work, det: Detection) -> None:
    seg_lo, seg_hi, smooth = work.segment_bounds(det.location)
    if not smooth:
        return  # swallowed by a bracket created for a detection closer than the minimum width
    det = _nudge(det, seg_lo, seg_hi)
    if det is None:
        return
    lower, d, upper = _widen(det, seg_lo, seg_hi)
    w = min_width(det)
    a = work.containing(lower)
    if lower - work.fr[a] < w:
        lower = work.fr[a]  # absorb a sliver remnant (or a collision) into the bracket
    b = work.containing(upper) if upper < work.fr[-1] else len(work.deg) - 1
    if work.fr[b] >= upper - COLLISION_TOL and b > a:
        b -= 1  # upper sits on a boundary: interval b is untouched
    if work.fr[b + 1] - upper < w:
        upper = work.fr[b + 1]
    fr = [work.fr[a]]
    deg, lab = [], []
    if lower > work.fr[a]:
        fr.append(lower)
        deg.append(work.deg[a])
        lab.append(SMOOTH)
    bid = work.new_id()
    fr += [d, upper]
    deg += [BRACKET_DEGREE, BRACKET_DEGREE]
    lab += [bid, bid]
    if upper < work.fr[b + 1]:
        fr.append(work.fr[b + 1])
        deg.append(work.deg[b])
        lab.append(SMOOTH)
    work.splice("bracket_created", a, b + 1, fr, deg, lab)


def _update_one(work: _Work, seg_lo: float, seg_hi: float, dets: list) -> None:
    a = work.index_of(seg_lo)
    b = work.index_of(seg_hi)
    if a is None or b is None:
        raise MeshError("nonsmooth segment boundaries not found in the working mesh")
    pieces = []  # (left, right, degree, label) covering [seg_lo, seg_hi]
    cursor = seg_lo
    for det in dets:
        w = min_width(det)
        if pieces and det.location - cursor <= w:
            # Too close to the previous bracket: stretch its right interval over this one.
            left, _, deg, lab = pieces[-1]
            cursor = min(seg_hi, max(cursor, det.location + w))
            pieces[-1] = (left, cursor, deg, lab)
            continue
        det = _nudge(det, cursor, seg_hi)
        if det is None:
            continue
        lower, d, upper = _widen(det, cursor, seg_hi)
        if lower - cursor < w:
            lower = cursor
        if lower > cursor:
            pieces.append((cursor, lower, BRACKET_DEGREE, SMOOTH))
        bid = work.new_id()
        pieces += [(lower, d, BRACKET_DEGREE, bid), (d, upper, BRACKET_DEGREE, bid)]
        cursor = upper
    if not pieces:
        return
    if seg_hi - cursor < min_width(dets[-1]):
        left, _, lab = pieces[-1][0], pieces[-1][1], pieces[-1][3]
        pieces[-1] = (left, seg_hi, BRACKET_DEGREE, lab)
        cursor = seg_hi
    if cursor < seg_hi:
        pieces.append((cursor, seg_hi, BRACKET_DEGREE, SMOOTH))
    start, stop = a, b
    # Leading and trailing gaps are absorbed by smooth neighbors when there are any.
    if pieces[0][3] == SMOOTH and a > 0 and work.lab[a - 1] == SMOOTH:
        pieces[0] = (work.fr[a - 1], pieces[0][1], work.deg[a - 1], SMOOTH)
        start = a - 1
    if pieces[-1][3] == SMOOTH and b < len(work.deg) and work.lab[b] == SMOOTH:
        pieces[-1] = (pieces[-1][0], work.fr[b + 1], work.deg[b], SMOOTH)
        stop = b + 1
    fr = [pieces[0][0]] + [p[1] for p in pieces]
    work.splice("bracket_updated", start, stop, fr, [p[2] for p in pieces], [p[3] for p in pieces])


def _run_brackets(work: _Work, mesh: Mesh, detections: DetectionReport) -> None:
    """Bracket detections on smooth segments, then update nonsmooth segments holding detections."""
    groups = group_by_segment(detections, mesh)
    for start, dets in groups.items():
        if mesh.segment_of(start).kind == "smooth":
            for det in dets:
                _bracket_one(work, det)
    for start, dets in groups.items():
        seg = mesh.segment_of(start)
        if seg.kind == "nonsmooth":
            lo, hi = _segment_span(mesh, seg)
            _update_one(work, lo, hi, dets)


def bracket(mesh: Mesh, detections: DetectionReport, log: RefinementLog | None = None) -> Mesh:
    """Replace the neighborhood of each detection on a smooth segment by a two-interval bracket."""
    work = _Work.from_mesh(mesh, log)
    for start, dets in group_by_segment(detections, mesh).items():
        if mesh.segment_of(start).kind != "smooth":
            raise MeshError("bracket() only handles detections on smooth segments")
        for det in dets:
            _bracket_one(work, det)
    return work.to_mesh()


def update_bracket(mesh: Mesh, segment: Segment, detections, log: RefinementLog | None = None) -> Mesh:
    """Contract the nonsmooth ``segment`` around its detections."""
    if segment.kind != "nonsmooth":
        raise MeshError("update_bracket() needs a nonsmooth segment")
    dets = sorted(detections, key=lambda d: d.location)
    if not dets:
        raise MeshError("update_bracket() needs at least one detection")
    lo, hi = _segment_span(mesh, segment)
    work = _Work.from_mesh(mesh, log)
    _update_one(work, lo, hi, dets)
    return work.to_mesh()


def _relabel(work: _Work, detections: DetectionReport, e_of) -> None:
    locs = [d.location for d in detections]
    k = 0
    while k < len(work.lab):
        if work.lab[k] == SMOOTH:
            k += 1
            continue
        j = k
        while j < len(work.lab) and work.lab[j] == work.lab[k]:
            j += 1
        lo, hi = work.fr[k], work.fr[j]
        has_det = any(lo <= x < hi for x in locs)
        errs = [e_of(work.fr[i], work.fr[i + 1]) for i in range(k, j)]
        if not has_det and any(e is not None and e for e in errs):
            work.splice("bracket_relabeled", k, j, work.fr[k:j + 1], work.deg[k:j], [SMOOTH] * (j - k))
        k = j


def _error_lookup(mesh: Mesh, report: ErrorReport, epsilon: float):
    table = {
        (float(mesh.fractions[k]), float(mesh.fractions[k + 1])): bool(report.e_max[k] > epsilon)
        for k in range(mesh.n_intervals)
    }
    return lambda lo, hi: table.get((lo, hi))


def relabel(mesh: Mesh, detections: DetectionReport, report: ErrorReport, epsilon: float,
            log: RefinementLog | None = None, reference: Mesh | None = None) -> Mesh:
    """Turn detection-free nonsmooth segments with a failing interval back into smooth ones.

    ``report`` belongs to ``reference`` (default: ``mesh``); intervals are matched by their bounds.
    """
    work = _Work.from_mesh(mesh, log)
    _relabel(work, detections, _error_lookup(reference or mesh, report, epsilon))
    return work.to_mesh()


def map_to_old(old: Mesh, new: Mesh, k: int) -> tuple[int, int | None]:
    """Return (case, old index) for interval ``k`` of ``new`` (case 3 has no index)."""
    lo, hi = new.interval(k)
    ofr = old.fractions
    for j in range(old.n_intervals):
        if not old.is_smooth(j) and ofr[j] == lo and ofr[j + 1] == hi:
            return 2, j
    hits = [j for j in range(old.n_intervals)
            if old.is_smooth(j) and min(hi, ofr[j + 1]) - max(lo, ofr[j]) > COLLISION_TOL]
    if len(hits) > 1:
        raise AssertionError(f"interval [{lo}, {hi}] maps to several old smooth intervals {hits}")
    if hits:
        return 1, hits[0]
    return 3, None


def ph_split(left: float, right: float, degree: int, e: float, epsilon: float,
             p_min: int = P_MIN, p_max: int = P_MAX):
    """Bundled ph rule for a failing interval: raise the degree or split evenly."""
    p_new = degree + max(1, math.ceil(math.log10(e / epsilon)))
    if p_new <= p_max:
        return [left, right], [p_new]
    n = math.ceil(p_new / p_min)
    fr = list(np.linspace(left, right, n + 1))
    fr[0], fr[-1] = left, right
    return fr, [p_min] * n


def smooth_refine(old_mesh: Mesh, intermediate: Mesh, report: ErrorReport, detections: DetectionReport,
                  epsilon: float, log: RefinementLog | None = None,
                  p_min: int = P_MIN, p_max: int = P_MAX) -> Mesh:
    e_old = np.array(report.e_max, dtype=float)
    for det in detections:
        e_old[old_mesh.locate(det.location)] = 0.0
    work = _Work.from_mesh(intermediate, log)
    # Walk right to left so earlier indices stay valid while splicing.
    for k in reversed(range(intermediate.n_intervals)):
        if not intermediate.is_smooth(k):
            continue
        case, j = map_to_old(old_mesh, intermediate, k)
        if case == 3 or e_old[j] <= epsilon:
            continue
        lo, hi = intermediate.interval(k)
        fr, deg = ph_split(lo, hi, int(intermediate.degrees[k]), e_old[j], epsilon, p_min, p_max)
        kind = "degree_raised" if len(deg) == 1 else "smooth_subdivided"
        work.splice(kind, k, k + 1, fr, deg, [SMOOTH] * len(deg))
    return work.to_mesh()


def nonsmooth_pass(mesh: Mesh, report: ErrorReport, detections: DetectionReport, epsilon: float,
                   log: RefinementLog | None = None) -> Mesh:
    """Adjust bounds, bracket, update brackets and relabel, in that order."""
    work = _Work.from_mesh(mesh, log)
    adjusted = adjust_bounds(detections, mesh)
    _run_brackets(work, mesh, adjusted)
    _relabel(work, adjusted, _error_lookup(mesh, report, epsilon))
    return work.to_mesh()


def refine(mesh: Mesh, report: ErrorReport, detections: DetectionReport, epsilon: float,
           iteration: int = 0, p_min: int = P_MIN, p_max: int = P_MAX) -> tuple[Mesh, RefinementLog]:
    """One full refinement step: nonsmooth pass followed by the smooth pass."""
    log = RefinementLog(iteration=iteration)
    intermediate = nonsmooth_pass(mesh, report, detections, epsilon, log)
    new = smooth_refine(mesh, intermediate, report, detections, epsilon, log, p_min, p_max)
    new.validate(p_min=min(p_min, int(mesh.degrees.min())), p_max=max(p_max, int(mesh.degrees.max())))
    return new, log
