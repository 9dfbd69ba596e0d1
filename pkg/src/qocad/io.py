"""Run outputs: pulse CSV, JSON-lines trace, JSON report and population CSV.

Floats are written with 17 significant digits so every double round-trips.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DimensionError
from .model import ControlProblem, _bounds_array
from .propagation import Trajectory

MAX_POPULATION_ROWS = 2000


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else str(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def dumps(obj) -> str:
    """Deterministic JSON; ``repr`` of a Python float is already shortest round-trip."""
    return json.dumps(_json_safe(obj), sort_keys=True)


# --- pulses -----------------------------------------------------------------------


def write_pulses(path, u, dt: float, names, bounds) -> None:
    """``# M=..,N=..,dt=..,bounds=..`` comment, a header row, then ``t_j, u_1j, ...``."""
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    m, n = u.shape
    b = _bounds_array(bounds, m)
    meta = f"# M={m};N={n};dt={fmt(dt)};bounds={','.join('inf' if not np.isfinite(x) else fmt(x) for x in b)}"
    with open(path, "w", newline="") as fh:
        fh.write(meta + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *names])
        for j in range(n):
            w.writerow([fmt(j * dt), *(fmt(x) for x in u[:, j])])


def read_pulses(path) -> dict:
    """Inverse of :func:`write_pulses`: ``{"u", "dt", "names", "bounds"}``."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"pulse file {path} does not exist")
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("#"):
            raise ConfigurationError(f"{path}: missing '# M=..;N=..' metadata line")
        meta = dict(item.split("=", 1) for item in first[1:].strip().split(";"))
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    m, n = int(meta["M"]), int(meta["N"])
    if len(header) != m + 1 or len(body) != n:
        raise DimensionError(f"{path}: expected {n} rows of {m} controls")
    data = np.array([[float(x) for x in r] for r in body], dtype=np.float64)
    bounds = np.array([float(x) for x in meta["bounds"].split(",")])
    u = data[:, 1:].T.copy()
    if np.any(np.abs(u) > bounds[:, None] * (1 + 1e-12)):
        raise ConfigurationError(f"{path}: pulse values exceed the declared bounds")
    return {"u": u, "dt": float(meta["dt"]), "names": tuple(header[1:]), "bounds": bounds}


# --- trace / report -------------------------------------------------------------------


def write_trace(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(dumps(rec.as_dict()) + "\n")


def read_trace(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(_json_safe(report), indent=2, sort_keys=True) + "\n")


# --- populations -----------------------------------------------------------------------


def population_rows(traj: Trajectory, times, max_rows: int = MAX_POPULATION_ROWS):
    """Downsampled ``|<i|Psi_j>|^2`` rows; always keeps the final step."""
    objs = traj.objects
    total = objs.shape[0]
    stride = max(1, math.ceil(total / max_rows))
    idx = list(range(0, total, stride))
    if idx[-1] != total - 1:
        if len(idx) >= max_rows:
            idx[-1] = total - 1
        else:
            idx.append(total - 1)
    pops = np.abs(objs[idx]) ** 2  # (rows, l, S)
    return idx, [times[i] for i in idx], pops


def write_populations(path, traj: Trajectory, times, max_rows: int = MAX_POPULATION_ROWS) -> None:
    _, ts, pops = population_rows(traj, times, max_rows)
    l, s = pops.shape[1], pops.shape[2]
    cols = [f"p{i}" for i in range(l)] if s == 1 else [f"s{c}_p{i}" for c in range(s) for i in range(l)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *cols])
        for t, p in zip(ts, pops):
            w.writerow([fmt(t), *(fmt(x) for x in p.T.ravel())])


def problem_summary(problem: ControlProblem) -> dict:
    spec = problem.metadata.get("system")
    params = {} if spec is None else {k: {"value": v, "unit": unit} for k, (v, unit) in spec.parameters.items()}
    return {
        "name": problem.name,
        "mode": problem.mode,
        "dim": problem.hamiltonian.dim,
        "controls": list(problem.hamiltonian.names),
        "steps": problem.grid.steps,
        "dt": problem.grid.dt,
        "terms": [{"label": t.label, "kind": t.kind, "weight": t.weight} for t in problem.terms],
        "parameters": params,
    }
