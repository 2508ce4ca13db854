"""Small problems and builders shared by several test modules."""
import math

import numpy as np

from jumpmesh.problems import OcpProblem


def growth_problem(t0=0.0, tf=1.0):
    """ydot = y on a fixed horizon, y(t0) = 1; exact solution exp(t - t0)."""
    return OcpProblem(
        name="growth",
        n_y=1,
        n_u=1,
        dynamics=lambda y, u, t: y[:, :1].copy(),
        lagrange=lambda y, u, t: 0.5 * u[:, 0] ** 2,
        state_bounds=([-100.0], [100.0]),
        control_bounds=(-1.0, 1.0),
        initial_state_bounds=([1.0], [1.0]),
        t0_bounds=(t0, t0),
        tf_bounds=(tf, tf),
    )


def drift_problem(c=(0.7, -1.3)):
    """ydot = c (constant); affine exact solution."""
    c = np.asarray(c, dtype=float)
    return OcpProblem(
        name="drift",
        n_y=c.size,
        n_u=1,
        dynamics=lambda y, u, t: np.broadcast_to(c, y.shape).copy(),
        state_bounds=(-100.0, 100.0),
        control_bounds=(-1.0, 1.0),
        t0_bounds=(0.0, 0.0),
        tf_bounds=(2.0, 2.0),
    )


def constrained_toy():
    """Nonlinear two-state problem with a path and a boundary constraint, free final time."""
    return OcpProblem(
        name="toy",
        n_y=2,
        n_u=2,
        dynamics=lambda y, u, t: np.column_stack((y[:, 1] * u[:, 0], np.sin(y[:, 0]) + u[:, 1] * t)),
        lagrange=lambda y, u, t: y[:, 0] ** 2 + u[:, 0] * u[:, 1],
        mayer=lambda y0, t0, yf, tf: tf + yf[0] ** 2,
        path=lambda y, u, t: (y[:, :1] * u[:, 1:2]) - 1.0,
        boundary=lambda y0, t0, yf, tf: np.array([y0[0] + yf[1] * tf - 3.0]),
        n_c=1,
        n_b=1,
        state_bounds=(-5.0, 5.0),
        control_bounds=(-2.0, 2.0),
        t0_bounds=(0.0, 0.0),
        tf_bounds=(0.5, 4.0),
    )


def interior_point(lo, hi, rng):
    finite = np.isfinite(lo) & np.isfinite(hi)
    z = rng.normal(size=lo.size)
    z[finite] = lo[finite] + (hi[finite] - lo[finite]) * rng.uniform(0.2, 0.8, finite.sum())
    return z


E = math.e


def mp_lgr_nodes(n, dps=50):
    """LGR nodes as the roots of P_{n-1} + P_n, found with mpmath (independent of jumpmesh.basis)."""
    import mpmath

    if n == 1:
        return [mpmath.mpf(-1)]
    with mpmath.workdps(dps):
        coeffs = [mpmath.mpf(0)] * (n + 1)
        for k in (n - 1, n):
            for i, v in enumerate(mpmath.taylor(lambda x, k=k: mpmath.legendre(k, x), 0, k)):
                coeffs[i] += v
        roots = mpmath.polyroots(coeffs[::-1], maxsteps=400, extraprec=4 * dps)
        roots = sorted(mpmath.re(r) for r in roots)
        roots[0] = mpmath.mpf(-1)
        return roots


# -- randomized refinement scenarios -------------------------------------------------


def random_mesh(rng):
    from jumpmesh.mesh import SMOOTH, Mesh

    K = int(rng.integers(2, 13))
    fr = np.sort(rng.uniform(-1, 1, K - 1))
    while np.any(np.diff(np.concatenate(([-1.0], fr, [1.0]))) < 1e-3):
        fr = np.sort(rng.uniform(-1, 1, K - 1))
    degrees = rng.integers(3, 11, K)
    labels = []
    k = 0
    while k < K:
        if k + 1 < K and rng.random() < 0.25:
            labels += [100 + k, 100 + k]
            degrees[k] = degrees[k + 1] = 4
            k += 2
        else:
            labels.append(SMOOTH)
            k += 1
    return Mesh(np.concatenate(([-1.0], fr, [1.0])), degrees, labels)


def random_detections(rng, mesh):
    from jumpmesh.jumpfun import Detection, DetectionReport

    dets = []
    for _ in range(int(rng.integers(0, 5))):
        r = rng.random()
        if r < 0.15:
            # Just next to an existing mesh point.
            x = float(rng.choice(mesh.fractions[1:-1] if mesh.n_intervals > 1 else [0.0]))
            loc = x + float(rng.choice([-1, 1])) * 10 ** rng.uniform(-10, -4)
        else:
            loc = float(rng.uniform(-0.999, 0.999))
        mu = float(rng.choice([1.0, 1.5, 2.0]))
        if rng.random() < 0.05:
            lower = upper = loc
        else:
            lower = max(-1.0, loc - mu * 10 ** rng.uniform(-5, -0.7))
            upper = min(1.0, loc + mu * 10 ** rng.uniform(-5, -0.7))
        dets.append(Detection(loc, lower, upper, 0, float(rng.choice([-1, 1])) * 0.5))
    dets.sort(key=lambda d: d.location)
    return DetectionReport(tuple(dets))


def random_report(rng, mesh, epsilon):
    from jumpmesh.error_est import ErrorReport

    e = epsilon * 10 ** rng.uniform(-3, 4, mesh.n_intervals)
    return ErrorReport(e, [], [], [], np.ones(1))


def check_scenario(rng, epsilon=1e-6):
    """Run one random refinement scenario and return a dict of property-name -> bool."""
    from jumpmesh.refine import RefinementLog, adjust_bounds, group_by_segment, refine, relabel

    mesh = random_mesh(rng)
    dets = random_detections(rng, mesh)
    report = random_report(rng, mesh, epsilon)
    new, log = refine(mesh, report, dets, epsilon, iteration=3)
    out = {}
    try:
        new.validate()
        out["valid"] = True
    except ValueError:
        out["valid"] = False
    # Every detection ends up inside a nonsmooth segment; those pinned to a mesh point are its interior point.
    spans = [(new.fractions[s.start], new.fractions[s.start + 1], new.fractions[s.stop])
             for s in new.segments if s.kind == "nonsmooth"]
    contained = True
    for d in dets:
        hits = [sp for sp in spans if sp[0] <= d.location <= sp[2]]
        contained &= bool(hits)
        if np.any(new.fractions == d.location):
            contained &= any(sp[1] == d.location and sp[0] < d.location < sp[2] for sp in spans)
    out["containment"] = contained
    replayed = RefinementLog.from_text(log.to_text()).replay(mesh)
    out["replay"] = (np.array_equal(replayed.fractions, new.fractions)
                     and np.array_equal(replayed.degrees, new.degrees) and replayed == new)
    rel = relabel(mesh, dets, report, epsilon)
    out["relabel_noop"] = (np.array_equal(rel.fractions, mesh.fractions)
                           and np.array_equal(rel.degrees, mesh.degrees))
    adj = adjust_bounds(dets, mesh)
    ok = len(adj) == len(dets)
    for start, group in group_by_segment(dets, mesh).items():
        seg = mesh.segment_of(start)
        lo, hi = mesh.fractions[seg.start], mesh.fractions[seg.stop]
        adjusted = [a for a in adj if lo <= a.location < hi or (hi == 1.0 and a.location == hi)]
        adjusted.sort(key=lambda a: a.location)
        ok &= all(lo <= a.lower and a.upper <= hi for a in adjusted)
        ok &= adjusted[0].lower == max(lo, group[0].lower)
        ok &= adjusted[-1].upper == min(hi, group[-1].upper)
        for i in range(len(group) - 1):
            if min(hi, group[i].upper) > max(lo, group[i + 1].lower):
                mid = 0.5 * (group[i].location + group[i + 1].location)
                ok &= adjusted[i].upper == mid and adjusted[i + 1].lower == mid
    out["adjust_bounds"] = ok
    return out
