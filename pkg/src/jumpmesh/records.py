"""Run records: JSON solution document, mesh-history CSV, refinement log and plot series."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .driver import RunHistory
from .transcription import CollocationSolution

HISTORY_COLUMNS = ("iteration", "interval_index", "T_left", "T_right", "degree", "segment_kind", "e_max")


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def _time_map(tau, t0, tf):
    return (0.5 * (tf - t0) * np.asarray(tau) + 0.5 * (tf + t0)).tolist()


def run_record(history: RunHistory, solution: CollocationSolution | None) -> dict:
    """Everything needed to inspect or reproduce a run, as plain JSON-able data."""
    iterations = []
    for rec in history.records:
        mesh = rec.mesh
        iterations.append({
            "iteration": rec.iteration,
            "fractions": _floats(mesh.fractions),
            "times": _time_map(mesh.fractions, rec.t0, rec.tf),
            "degrees": mesh.degrees.tolist(),
            "labels": mesh.labels.tolist(),
            "e_max": _floats(rec.e_max),
            "detections": [
                {"d": d.location, "d_minus": d.lower, "d_plus": d.upper,
                 "component": d.component, "minmod": d.minmod}
                for d in rec.detections
            ],
            "status": rec.status,
            "nlp_iterations": rec.nlp_iterations,
            "kkt_residual": rec.kkt_residual,
            "cost": rec.cost,
            "refinement": rec.refinement.to_text().splitlines() if rec.refinement else [],
        })
    doc = {
        "problem": history.problem,
        "config": history.config.as_dict(),
        "converged": history.converged,
        "message": history.message,
        "iterations": iterations,
        "timing": {"wall_time": [rec.wall_time for rec in history.records]},
        "final": None,
    }
    if solution is not None:
        nodes = solution.tau_nodes
        doc["final"] = {
            "cost": solution.cost,
            "t0": solution.t0,
            "tf": solution.tf,
            "mesh": solution.mesh.to_dict(),
            "tau_nodes": _floats(nodes),
            "t_nodes": _time_map(nodes, solution.t0, solution.tf),
            "states": _floats(solution.states),
            "tau_colloc": _floats(solution.tau),
            "controls": _floats(solution.controls),
            "nonsmooth_segments": [
                {"start": s.start, "bracket_point": s.bracket_point,
                 "left": float(solution.mesh.fractions[s.start]),
                 "right": float(solution.mesh.fractions[s.stop])}
                for s in solution.mesh.segments if s.kind == "nonsmooth"
            ],
        }
    return doc


def _check_parent(path: Path) -> None:
    if not path.parent.exists():
        raise OSError(f"cannot write {path}: directory {path.parent} does not exist")


def write_solution(path, record: dict) -> None:
    path = Path(path)
    _check_parent(path)
    try:
        path.write_text(json.dumps(record, indent=1) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write solution file {path}: {exc}") from exc


def read_solution(path) -> dict:
    return json.loads(Path(path).read_text())


def write_history(path, history: RunHistory) -> None:
    """One CSV row per interval per iteration, plus the refinement log alongside."""
    path = Path(path)
    _check_parent(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(HISTORY_COLUMNS)
            for rec in history.records:
                mesh = rec.mesh
                for k in range(mesh.n_intervals):
                    kind = "smooth" if mesh.is_smooth(k) else "nonsmooth"
                    w.writerow([rec.iteration, k, repr(float(mesh.fractions[k])),
                                repr(float(mesh.fractions[k + 1])), int(mesh.degrees[k]), kind,
                                repr(float(rec.e_max[k]))])
        log_path = path.with_suffix(path.suffix + ".refine")
        log_path.write_text("".join(rec.refinement.to_text() for rec in history.records if rec.refinement))
    except OSError as exc:
        raise OSError(f"cannot write history file {path}: {exc}") from exc


def _series(path: Path, xs, ys) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("tau", "value"))
        for x, y in zip(xs, ys):
            w.writerow((repr(float(x)), repr(float(y))))


def write_plot_data(directory, history: RunHistory, solution: CollocationSolution | None) -> list[Path]:
    """Per-component control and state series plus the mesh-history scatter."""
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
        written = []
        if solution is not None:
            for i in range(solution.n_u):
                p = d / f"control_{i + 1}.csv"
                _series(p, solution.tau, solution.controls[:, i])
                written.append(p)
            for i in range(solution.n_y):
                p = d / f"state_{i + 1}.csv"
                _series(p, solution.tau_nodes, solution.states[:, i])
                written.append(p)
        xs, ys = [], []
        for rec in history.records:
            xs.extend(rec.mesh.fractions)
            ys.extend([rec.iteration] * rec.mesh.fractions.size)
        p = d / "mesh_history.csv"
        _series(p, xs, ys)
        written.append(p)
    except OSError as exc:
        raise OSError(f"cannot write plot data under {d}: {exc}") from exc
    return written


def write_outputs(history: RunHistory, solution, out=None, history_path=None, plot_dir=None,
                  extra: dict | None = None) -> dict:
    record = run_record(history, solution)
    record["config"].update(extra or {})
    if out:
        write_solution(out, record)
    if history_path:
        write_history(history_path, history)
    if plot_dir:
        write_plot_data(plot_dir, history, solution)
    return record


def summary_line(history: RunHistory, solution) -> dict:
    mesh = history.final.mesh
    return {
        "problem": history.problem,
        "epsilon": history.config.epsilon,
        "safety": history.config.jump.safety,
        "detect": history.config.detect,
        "converged": history.converged,
        "M": history.iterations,
        "K": mesh.n_intervals,
        "P": mesh.total_points,
        "nonsmooth": sum(s.kind == "nonsmooth" for s in mesh.segments),
        "cost": solution.cost if solution is not None else math.nan,
        "wall_time": history.wall_time,
    }
