"""Pulse optimization: steepest descent, ADAM and L-BFGS.

All methods work on the raw variables ``v``; amplitude bounds are already
folded in by the ``tanh`` map, so no box constraints are needed here.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from collections.abc import Callable
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.typing import NDArray

from . import analytic, autograd
from .autograd import GradientMode
from .cost import CostReport
from .errors import ConfigurationError, OptimizationError
from .model import ControlProblem, bounded_map

logger = logging.getLogger(__name__)

METHODS = ("sd", "adam", "lbfgs")
GRAD_PATHS = ("autograd-exact", "autograd-approx", "analytic")
REASONS = ("fidelity_reached", "max_iters", "grad_floor", "stalled")


@dataclass(frozen=True)
class OptimizerConfig:
    method: str = "adam"
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    memory: int = 10
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    max_line_search: int = 40
    max_iterations: int = 1000
    target_fidelity: float = 0.999
    grad_norm_floor: float = 1e-10
    seed: int = 0
    grad_path: str = "autograd-exact"
    stall_window: int = 50
    stall_tol: float = 1e-10

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown optimizer {self.method!r}; choose from {', '.join(METHODS)}")
        if self.grad_path not in GRAD_PATHS:
            raise ConfigurationError(f"unknown gradient path {self.grad_path!r}; choose from {', '.join(GRAD_PATHS)}")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigurationError("ADAM betas must lie in (0, 1)")
        if self.memory < 1:
            raise ConfigurationError("L-BFGS memory must be >= 1")
        if not 0 < self.armijo_c1 < 1 or not 0 < self.backtrack < 1:
            raise ConfigurationError("line-search parameters must lie in (0, 1)")
        if not 0 < self.target_fidelity <= 1:
            raise ConfigurationError("target fidelity must lie in (0, 1]")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")

    def replace(self, **changes) -> "OptimizerConfig":
        return OptimizerConfig(**{**asdict(self), **changes})


# --- update rules -------------------------------------------------------------


def sd_step(v, g, eta: float) -> NDArray:
    return np.asarray(v, dtype=np.float64) - eta * np.asarray(g, dtype=np.float64)


@dataclass
class AdamState:
    m: NDArray
    s: NDArray

    @classmethod
    def zeros(cls, shape) -> "AdamState":
        return cls(np.zeros(shape), np.zeros(shape))


def adam_step(state: AdamState, v, g, t: int, eta: float = 0.01, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> tuple[AdamState, NDArray]:
    """One bias-corrected ADAM update; ``t`` counts from 1."""
    if t < 1:
        raise ValueError("ADAM step counter starts at 1")
    g = np.asarray(g, dtype=np.float64)
    m = beta1 * state.m + (1 - beta1) * g
    s = beta2 * state.s + (1 - beta2) * g * g
    m_hat = m / (1 - beta1**t)
    s_hat = s / (1 - beta2**t)
    return AdamState(m, s), np.asarray(v, dtype=np.float64) - eta * m_hat / (np.sqrt(s_hat) + eps)


class LbfgsHistory:
    """Curvature pairs ``(s, y)`` of the most recent accepted steps."""

    def __init__(self, memory: int = 10):
        if memory < 1:
            raise ValueError("memory must be >= 1")
        self.pairs: deque = deque(maxlen=memory)
        self.resets = 0
        self.skipped = 0

    def __len__(self) -> int:
        return len(self.pairs)

    def push(self, s, y) -> bool:
        s, y = np.ravel(s), np.ravel(y)
        sy = float(s @ y)
        if not sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            self.skipped += 1
            return False
        self.pairs.append((s, y, 1.0 / sy))
        return True

    def reset(self) -> None:
        self.pairs.clear()
        self.resets += 1

    def direction(self, g) -> NDArray:
        """Two-loop recursion for ``-H g``; scaled steepest descent when empty."""
        shape = np.shape(g)
        q = np.ravel(g).astype(np.float64)
        if not self.pairs:
            return -(q / max(1.0, float(np.linalg.norm(q)))).reshape(shape)
        alphas = []
        for s, y, rho in reversed(self.pairs):
            a = rho * (s @ q)
            q = q - a * y
            alphas.append(a)
        s, y, _ = self.pairs[-1]
        q = q * ((s @ y) / (y @ y))
        for (s, y, rho), a in zip(self.pairs, reversed(alphas)):
            b = rho * (y @ q)
            q = q + (a - b) * s
        return -q.reshape(shape)


@dataclass
class StepResult:
    v: NDArray
    cost: float
    grad: NDArray
    payload: object = None
    reset: bool = False
    moved: bool = True


ROUNDOFF = 1e-13


def _armijo(fun, v, cost, g, d, c1, shrink, max_steps):
    slope = float(np.vdot(g, d))
    noise = ROUNDOFF * max(1.0, abs(cost))
    gnorm = float(np.linalg.norm(g))
    alpha = 1.0
    for _ in range(max_steps):
        trial = v + alpha * d
        f_new, g_new, payload = fun(trial)
        if np.isfinite(f_new):
            if f_new <= cost + c1 * alpha * slope:
                return trial, f_new, g_new, payload
            # decrease below cost resolution: fall back on the gradient norm
            if -alpha * slope < noise and f_new <= cost + noise and np.linalg.norm(g_new) < gnorm:
                return trial, f_new, g_new, payload
        alpha *= shrink
    return None


def lbfgs_step(history: LbfgsHistory, v, g, cost: float, fun: Callable, c1: float = 1e-4,
               shrink: float = 0.5, max_steps: int = 40) -> StepResult:
    """Two-loop direction plus Armijo backtracking.

    ``fun(v)`` returns ``(cost, grad, payload)``. A non-descent direction or a
    failed line search resets the history and retries along ``-g``; if that
    fails too the point is returned unchanged with ``moved=False``.
    """
    v = np.asarray(v, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    d = history.direction(g)
    reset = False
    if not float(np.vdot(g, d)) < 0:
        history.reset()
        reset = True
        d = history.direction(g)
    found = _armijo(fun, v, cost, g, d, c1, shrink, max_steps)
    if found is None and len(history):
        history.reset()
        reset = True
        found = _armijo(fun, v, cost, g, history.direction(g), c1, shrink, max_steps)
    if found is None:
        return StepResult(v, cost, g, None, reset, moved=False)
    v_new, f_new, g_new, payload = found
    history.push(v_new - v, g_new - g)
    return StepResult(v_new, f_new, g_new, payload, reset)


def minimize_lbfgs(fun: Callable, v0, memory: int = 10, max_iterations: int = 100, gtol: float = 1e-10,
                   ftol: float | None = None) -> tuple[NDArray, float, int]:
    """Plain L-BFGS on ``fun(v) -> (cost, grad)``; returns ``(v, cost, iterations)``."""
    wrapped = lambda w: (*fun(w), None)
    v = np.asarray(v0, dtype=np.float64)
    cost, g = fun(v)
    history = LbfgsHistory(memory)
    it = 0
    for it in range(1, max_iterations + 1):
        step = lbfgs_step(history, v, g, cost, wrapped)
        v, cost, g = step.v, step.cost, step.grad
        if np.linalg.norm(g) < gtol or (ftol is not None and cost < ftol) or not step.moved:
            break
    return v, cost, it


# --- driver ---------------------------------------------------------------------


@dataclass
class IterationRecord:
    iteration: int
    total: float
    terms: dict
    fidelity: float
    grad_norm: float
    best_total: float
    wall_ms: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class OptimizationResult:
    v: NDArray
    u: NDArray
    trace: list[IterationRecord]
    reason: str
    report: CostReport
    events: list[str] = field(default_factory=list)

    @property
    def fidelity(self) -> float:
        return self.trace[-1].fidelity

    @property
    def iterations(self) -> int:
        return self.trace[-1].iteration

    @property
    def converged(self) -> bool:
        return self.reason == "fidelity_reached"


def make_objective(problem: ControlProblem, grad_path: str) -> Callable:
    """``v -> (total, grad_v, CostReport)`` along the chosen gradient path."""
    if grad_path == "analytic":
        def fun(v):
            report, g = analytic.analytic_value_and_grad(problem, v)
            return report.total, g, report
    elif grad_path in ("autograd-exact", "autograd-approx"):
        mode = GradientMode.EXACT if grad_path == "autograd-exact" else GradientMode.APPROX

        def fun(v):
            report, g = autograd.value_and_grad(problem, v, mode)
            return report.total, g, report
    else:
        raise ConfigurationError(f"unknown gradient path {grad_path!r}")
    return fun


def initial_pulses(problem: ControlProblem, seed: int) -> NDArray:
    """Raw variables drawn uniformly from [-0.5, 0.5]."""
    return np.random.default_rng(seed).uniform(-0.5, 0.5, size=problem.shape)


def run(problem: ControlProblem, config: OptimizerConfig | None = None, initial_v=None,
        callback: Callable[[IterationRecord], None] | None = None) -> OptimizationResult:
    """Minimize the total cost of ``problem``.

    Record ``i`` describes the pulses before the ``i``-th update, so the
    returned pulses always match the last record.
    """
    config = config or OptimizerConfig()
    problem.hamiltonian.validate()
    fun = make_objective(problem, config.grad_path)
    v = initial_pulses(problem, config.seed) if initial_v is None else np.array(initial_v, dtype=np.float64)
    if v.shape != problem.shape:
        raise ConfigurationError(f"initial pulses of shape {v.shape}, expected {problem.shape}")

    adam = AdamState.zeros(v.shape)
    history = LbfgsHistory(config.memory)
    events: list[str] = []
    trace: list[IterationRecord] = []
    best = np.inf
    clock = time.perf_counter()
    cost, g, report = fun(v)
    reason = "max_iters"

    for it in range(1, config.max_iterations + 1):
        gnorm = float(np.linalg.norm(g))
        now = time.perf_counter()
        best = min(best, cost)
        rec = IterationRecord(it, float(cost), dict(zip(report.labels, map(float, report.values))),
                              float(report.fidelity), gnorm, float(best), (now - clock) * 1e3)
        clock = now
        trace.append(rec)
        if callback is not None:
            callback(rec)
        if not (np.isfinite(cost) and np.isfinite(gnorm)):
            raise OptimizationError(f"non-finite cost or gradient at iteration {it}", trace)
        if report.fidelity >= config.target_fidelity:
            reason = "fidelity_reached"
            break
        if gnorm < config.grad_norm_floor:
            reason = "grad_floor"
            break
        w = config.stall_window
        if it > w:
            old = trace[-1 - w].best_total
            if old - best <= config.stall_tol * abs(old):
                reason = "stalled"
                break
        if it == config.max_iterations:
            break

        if config.method == "sd":
            v = sd_step(v, g, config.learning_rate)
        elif config.method == "adam":
            adam, v = adam_step(adam, v, g, it, config.learning_rate, config.beta1, config.beta2, config.epsilon)
        else:
            step = lbfgs_step(history, v, g, cost, fun, config.armijo_c1, config.backtrack,
                              config.max_line_search)
            if step.reset:
                events.append(f"iteration {it}: L-BFGS history reset")
            if not step.moved:
                events.append(f"iteration {it}: line search failed")
                reason = "stalled"
                break
            v, cost, g, report = step.v, step.cost, step.grad, step.payload
            continue
        cost, g, report = fun(v)

    logger.info("%s finished after %d iterations: %s (fidelity %.6f)", problem.name, trace[-1].iteration,
                reason, trace[-1].fidelity)
    return OptimizationResult(v, bounded_map(v, problem.bounds), trace, reason, report, events)
