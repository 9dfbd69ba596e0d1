"""Run configuration files (TOML).

A config names either a builtin problem::

    seed = 3
    out_dir = "runs/qt"

    [problem]
    builtin = "qubit-transfer"
    params = { time_optimal_weight = 0.5 }

    [optimizer]
    method = "lbfgs"
    max_iterations = 500

or spells the system out with sparse ``[row, col, re, im]`` triplets::

    [problem]
    name = "custom"
    dim = 2
    drift = [[0, 0, 1.0, 0.0], [1, 1, -1.0, 0.0]]
    initial = [[0, 1.0, 0.0]]          # [index, re, im]; omit for propagator mode

    [[problem.controls]]
    name = "x"
    bound = 1.5                        # optional amplitude bound
    triplets = [[0, 1, 1.0, 0.0], [1, 0, 1.0, 0.0]]

    [grid]
    steps = 200
    total_time = 4.0                   # or dt

    [[costs]]
    kind = "state"
    weight = 1.0
    target = [[1, 1.0, 0.0]]

For builtins, ``[[costs]]`` entries adjust the weight of the builtin term of
the same kind or append pulse penalties (``amplitude``, ``variation``).
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import tomli

from . import cost, problems
from .errors import ConfigurationError
from .model import ControlHamiltonian, ControlProblem, TimeGrid
from .optimize import OptimizerConfig

TOP_KEYS = {"seed", "out_dir", "problem", "grid", "costs", "optimizer", "initial_pulses"}
OPTIMIZER_KEYS = {f.name for f in fields(OptimizerConfig)} - {"seed"}


class ConfigError(ConfigurationError):
    pass


@dataclass
class RunConfig:
    problem: ControlProblem
    optimizer: OptimizerConfig
    out_dir: Path
    initial_pulses: Path | None = None
    source: Path | None = None

    @property
    def seed(self) -> int:
        return self.optimizer.seed


def _unknown(section: str, given, allowed) -> None:
    extra = sorted(set(given) - set(allowed))
    if extra:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(extra)}")


def matrix_from_triplets(triplets, dim: int, what: str) -> np.ndarray:
    out = np.zeros((dim, dim), dtype=np.complex128)
    for entry in triplets:
        if len(entry) != 4:
            raise ConfigError(f"{what}: triplet entries are [row, col, re, im], got {entry}")
        r, c, re, im = entry
        if not (0 <= int(r) < dim and 0 <= int(c) < dim):
            raise ConfigError(f"{what}: index ({r}, {c}) outside dimension {dim}")
        out[int(r), int(c)] += complex(float(re), float(im))
    return out


def vector_from_entries(entries, dim: int, what: str) -> np.ndarray:
    out = np.zeros(dim, dtype=np.complex128)
    for entry in entries:
        if len(entry) != 3:
            raise ConfigError(f"{what}: vector entries are [index, re, im], got {entry}")
        i, re, im = entry
        if not 0 <= int(i) < dim:
            raise ConfigError(f"{what}: index {i} outside dimension {dim}")
        out[int(i)] += complex(float(re), float(im))
    return out


def _grid(section: dict) -> TimeGrid:
    _unknown("grid", section, {"steps", "dt", "total_time"})
    if "steps" not in section:
        raise ConfigError("[grid] needs 'steps'")
    if ("dt" in section) == ("total_time" in section):
        raise ConfigError("[grid] needs exactly one of 'dt' or 'total_time'")
    steps = int(section["steps"])
    if "dt" in section:
        return TimeGrid(steps, float(section["dt"]))
    return TimeGrid.from_duration(float(section["total_time"]), steps)


def _explicit_terms(entries, dim: int) -> list:
    terms = []
    for i, e in enumerate(entries):
        what = f"costs[{i}]"
        kind = e.get("kind")
        weight = float(e.get("weight", 1.0))
        _unknown(what, e, {"kind", "weight", "target", "targets", "projector", "forbidden"})
        if kind in ("gate", "time_gate"):
            k = matrix_from_triplets(e.get("target", []), dim, what)
            terms.append((cost.gate_infidelity if kind == "gate" else cost.time_optimal_gate)(k, weight))
        elif kind in ("state", "time_state"):
            psi = vector_from_entries(e.get("target", []), dim, what)
            terms.append((cost.state_infidelity if kind == "state" else cost.time_optimal_state)(psi, weight))
        elif kind == "composite":
            cols = [vector_from_entries(t, dim, what) for t in e.get("targets", [])]
            if not cols:
                raise ConfigError(f"{what}: composite cost needs 'targets'")
            proj = matrix_from_triplets(e["projector"], dim, what) if "projector" in e else None
            terms.append(cost.composite_state_infidelity(np.stack(cols, axis=1), proj, weight))
        elif kind == "forbidden":
            idx = [int(x) for x in e.get("forbidden", [])]
            if not idx or not all(0 <= x < dim for x in idx):
                raise ConfigError(f"{what}: 'forbidden' must list basis indices below {dim}")
            terms.append(cost.forbidden_occupation(np.eye(dim, dtype=np.complex128)[:, idx], weight))
        elif kind == "amplitude":
            terms.append(cost.amplitude_penalty(weight))
        elif kind == "variation":
            terms.append(cost.variation_penalty(weight))
        else:
            raise ConfigError(f"{what}: unknown cost kind {kind!r}")
    return terms


def _explicit_problem(section: dict, grid_section, cost_entries) -> ControlProblem:
    _unknown("problem", section, {"name", "dim", "drift", "controls", "initial"})
    if "dim" not in section:
        raise ConfigError("[problem] needs 'dim' (or 'builtin')")
    dim = int(section["dim"])
    drift = matrix_from_triplets(section.get("drift", []), dim, "problem.drift")
    ctrl_specs = section.get("controls", [])
    mats, names, bounds = [], [], []
    for i, c in enumerate(ctrl_specs):
        _unknown(f"problem.controls[{i}]", c, {"name", "bound", "triplets"})
        mats.append(matrix_from_triplets(c.get("triplets", []), dim, f"problem.controls[{i}]"))
        names.append(str(c.get("name", f"u{i}")))
        bounds.append(c.get("bound"))
    if not mats:
        raise ConfigError("[problem] needs at least one control")
    ham = ControlHamiltonian(drift, np.stack(mats), tuple(names))
    if grid_section is None:
        raise ConfigError("explicit problems need a [grid] section")
    initial = None
    if "initial" in section:
        initial = vector_from_entries(section["initial"], dim, "problem.initial")
    terms = _explicit_terms(cost_entries or [], dim)
    if not terms:
        raise ConfigError("explicit problems need at least one [[costs]] entry")
    return ControlProblem(str(section.get("name", "custom")), ham, _grid(grid_section), terms,
                          bounds=bounds, initial=initial)


def _builtin_problem(section: dict, grid_section, cost_entries) -> ControlProblem:
    _unknown("problem", section, {"builtin", "params"})
    params = dict(section.get("params", {}))
    if grid_section is not None:
        grid = _grid(grid_section)
        params.setdefault("steps", grid.steps)
        params.setdefault("total_time", grid.total_time)
    prob = problems.build(section["builtin"], **params)
    if not cost_entries:
        return prob
    terms = list(prob.terms)
    for i, e in enumerate(cost_entries):
        _unknown(f"costs[{i}]", e, {"kind", "weight"})
        kind, weight = e.get("kind"), float(e.get("weight", 1.0))
        hit = [k for k, t in enumerate(terms) if t.kind == kind]
        if hit:
            for k in hit:
                terms[k] = terms[k].with_weight(weight)
        elif kind == "amplitude":
            terms.append(cost.amplitude_penalty(weight))
        elif kind == "variation":
            terms.append(cost.variation_penalty(weight))
        else:
            raise ConfigError(f"costs[{i}]: builtin {prob.name} has no {kind!r} term to reweight")
    return prob.replace(terms=terms)


def parse_config(text: str, base_dir: Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Parse TOML text; ``overrides`` (from CLI flags) win over file values."""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    base_dir = Path(base_dir or ".")
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    _unknown("top level", data, TOP_KEYS)
    if "problem" not in data:
        raise ConfigError("config needs a [problem] section")
    section = data["problem"]
    try:
        if "builtin" in section:
            problem = _builtin_problem(section, data.get("grid"), data.get("costs"))
        else:
            problem = _explicit_problem(section, data.get("grid"), data.get("costs"))
    except ConfigError:
        raise
    except (ConfigurationError, ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid problem: {exc}") from None

    opt = dict(data.get("optimizer", {}))
    _unknown("optimizer", opt, OPTIMIZER_KEYS)
    opt["seed"] = int(data.get("seed", 0))
    for flag, key in (("seed", "seed"), ("max_iters", "max_iterations"), ("optimizer", "method"),
                      ("grad_path", "grad_path")):
        if flag in overrides:
            opt[key] = overrides[flag]
    try:
        optimizer = OptimizerConfig(**opt)
    except TypeError as exc:
        raise ConfigError(f"[optimizer] {exc}") from None

    out_dir = Path(overrides.get("out_dir") or data.get("out_dir", "qocad-out"))
    if not out_dir.is_absolute() and "out_dir" not in overrides:
        out_dir = base_dir / out_dir
    initial = None
    if "initial_pulses" in data:
        initial = Path(data["initial_pulses"])
        if not initial.is_absolute():
            initial = base_dir / initial
        if not initial.is_file():
            raise ConfigError(f"initial_pulses file {initial} does not exist")
    return RunConfig(problem, optimizer, out_dir, initial)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = parse_config(text, path.parent, overrides)
    cfg.source = path
    return cfg
