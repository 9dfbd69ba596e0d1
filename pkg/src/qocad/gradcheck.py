"""Finite-difference checks tying the three gradient paths together.

Three comparisons are made per cost term:

* autograd exact-series gradient vs central differences of the real forward;
* analytic backward-propagation gradient vs autograd approximate mode;
* analytic gradient vs central differences of the *matched* forward.

The matched forward replaces each step by
``exp(-i dt sum_k (u - a)_k H_k) U_j(a)`` around an anchor ``a``. Its
derivative at ``u = a`` is exactly the first-order step derivative both
analytic and approximate-mode gradients use, so FD on it is an independent
oracle for them at any step size.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import analytic, autograd
from .autograd import GradientMode
from .cost import evaluate_total
from .errors import ConfigurationError
from .linalg import norm_bound
from .model import ControlProblem, bounded_map
from .propagation import (
    ExpmConfig,
    Trajectory,
    apply_taylor,
    choose_pn,
    propagate_state,
    propagate_unitary,
    step_unitary,
)

MAX_VARIABLES = 200
FD_STEP = 1e-3  # balances h^4 truncation against eps/h roundoff for O(1) smoothness


@dataclass(frozen=True)
class Tolerances:
    exact_vs_fd: float = 1e-6
    analytic_vs_approx: float = 1e-10
    analytic_vs_fd: float = 1e-6


def relative_error(g, ref) -> float:
    """Normwise ``max|g - ref| / max|ref|``; absolute when ``ref`` vanishes."""
    g, ref = np.asarray(g, dtype=float), np.asarray(ref, dtype=float)
    diff = float(np.max(np.abs(g - ref), initial=0.0))
    scale = float(np.max(np.abs(ref), initial=0.0))
    return diff / scale if scale > 0 else diff


def central_difference(f: Callable[[NDArray], float], v, step: float = FD_STEP) -> NDArray:
    """Fourth-order central differences with step ``step * (1 + |v|)``.

    The wider stencil lets the step stay large enough that roundoff in the
    cost does not swamp small gradients.
    """
    v = np.asarray(v, dtype=np.float64)
    grad = np.zeros_like(v)
    for idx in np.ndindex(v.shape):
        h = step * (1.0 + abs(v[idx]))
        vals = []
        for k in (2, 1, -1, -2):
            w = v.copy()
            w[idx] += k * h
            vals.append(f(w))
        grad[idx] = (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h)
    return grad


def _evolve(problem: ControlProblem, u: NDArray, cfg: ExpmConfig) -> Trajectory:
    ham, grid = problem.hamiltonian, problem.grid
    if problem.mode == "unitary":
        return propagate_unitary(ham, u, grid, cfg)
    return propagate_state(problem.initial_block(), ham, u, grid, cfg)


def exact_cost(problem: ControlProblem, v, cfg: ExpmConfig, terms=None) -> float:
    """Total cost of raw variables ``v`` through the real (truncated-series) forward."""
    terms = problem.terms if terms is None else terms
    u = bounded_map(v, problem.bounds)
    return evaluate_total(terms, _evolve(problem, u, cfg), u).total


def matched_cost(problem: ControlProblem, v, anchor_u: NDArray, cfg: ExpmConfig, terms=None) -> float:
    """Total cost through the linearized-step forward anchored at ``anchor_u``."""
    terms = problem.terms if terms is None else terms
    ham, grid = problem.hamiltonian, problem.grid
    u = bounded_map(v, problem.bounds)
    du = u - anchor_u
    x = problem.initial_block()
    out = [x]
    for j in range(grid.steps):
        x = step_unitary(ham, anchor_u[:, j], grid.dt, cfg) @ x
        delta = -1j * grid.dt * np.tensordot(du[:, j], ham.controls, axes=1)
        small = choose_pn(norm_bound(delta), 1.0)
        x = apply_taylor(delta / 2**small.squarings, x, small.taylor_order, 2**small.squarings)
        out.append(x)
    traj = Trajectory(problem.mode, np.stack(out), u)
    return evaluate_total(terms, traj, u).total


@dataclass
class TermCheck:
    label: str
    weight: float
    exact_vs_fd: float
    analytic_vs_approx: float
    analytic_vs_fd: float

    def passed(self, tol: Tolerances) -> bool:
        return (self.exact_vs_fd < tol.exact_vs_fd
                and self.analytic_vs_approx < tol.analytic_vs_approx
                and self.analytic_vs_fd < tol.analytic_vs_fd)


@dataclass
class GradCheckReport:
    rows: list[TermCheck] = field(default_factory=list)
    tolerances: Tolerances = Tolerances()

    @property
    def passed(self) -> bool:
        return all(r.passed(self.tolerances) for r in self.rows)

    def lines(self) -> list[str]:
        out = [f"{'term':34s} {'exact-vs-fd':>12s} {'analytic-vs-approx':>19s} {'analytic-vs-fd':>15s}"]
        for r in self.rows:
            mark = "ok" if r.passed(self.tolerances) else "FAIL"
            out.append(f"{r.label:34s} {r.exact_vs_fd:12.3e} {r.analytic_vs_approx:19.3e} "
                       f"{r.analytic_vs_fd:15.3e}  {mark}")
        return out


def check_gradients(problem: ControlProblem, v, tolerances: Tolerances | None = None,
                    cfg: ExpmConfig | None = None, corrupt: Callable[[NDArray], NDArray] | None = None,
                    step: float = FD_STEP) -> GradCheckReport:
    """Compare all three gradient paths for every cost term of ``problem``.

    ``corrupt`` is a test hook applied to the autograd and analytic gradients
    before comparison; it lets callers confirm that a wrong gradient fails.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.size > MAX_VARIABLES:
        raise ConfigurationError(f"finite differences need <= {MAX_VARIABLES} variables, got {v.size}")
    tolerances = tolerances or Tolerances()
    u0 = bounded_map(v, problem.bounds)
    if cfg is None:
        cfg = autograd.expm_config_for(problem, u0)
    hook = corrupt or (lambda g: g)
    report = GradCheckReport(tolerances=tolerances)
    for term in problem.terms:
        terms = [term]
        _, g_exact = autograd.value_and_grad(problem, v, GradientMode.EXACT, cfg, terms)
        _, g_approx = autograd.value_and_grad(problem, v, GradientMode.APPROX, cfg, terms)
        _, g_an = analytic.analytic_value_and_grad(problem, v, cfg, terms)
        fd_exact = central_difference(lambda w: exact_cost(problem, w, cfg, terms), v, step)
        fd_matched = central_difference(lambda w: matched_cost(problem, w, u0, cfg, terms), v, step)
        g_exact, g_an = hook(g_exact), hook(g_an)
        report.rows.append(TermCheck(
            term.label,
            term.weight,
            relative_error(g_exact, fd_exact),
            relative_error(g_an, g_approx),
            relative_error(g_an, fd_matched),
        ))
    return report
