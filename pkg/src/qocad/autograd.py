"""Reverse-mode automatic differentiation over the control graph.

The forward pass records one node per elementary operation (pulse input,
Hamiltonian assembly, step propagation, overlaps, squared magnitudes, sums)
on a :class:`Tape`. :func:`backward` walks the tape once in reverse and
accumulates adjoints.

Adjoint convention: for a complex array ``Z`` the adjoint is
``Zbar = dC/dRe(Z) + i dC/dIm(Z)``, so that ``dC = Re <Zbar, dZ>`` with
``<A, B> = sum(conj(A) * B)``. For a real quantity it is the plain
derivative.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from numpy.typing import NDArray

from .cost import CostReport, check_modes, primary_fidelity
from .model import ControlProblem, bounded_map, bounded_map_derivative
from .propagation import (
    ExpmConfig,
    Trajectory,
    apply_taylor,
    choose_pn,
    radius_bound,
    _taylor_matrix,
)


class GradientMode(str, enum.Enum):
    EXACT = "exact"    # backpropagate through every Taylor term and squaring
    APPROX = "approx"  # dU/du_k ~ (-i dt H_k) U, reusing the forward propagator


@dataclass
class Node:
    kind: str
    parents: tuple[int, ...]
    value: Any
    ctx: Any = None


@dataclass
class Tape:
    nodes: list[Node] = field(default_factory=list)
    visits: list[int] = field(default_factory=list)

    def add(self, kind: str, parents=(), value=None, ctx=None) -> int:
        self.nodes.append(Node(kind, tuple(parents), value, ctx))
        self.visits.append(0)
        return len(self.nodes) - 1

    def value(self, idx: int):
        return self.nodes[idx].value

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, output: int, mode: GradientMode = GradientMode.EXACT) -> dict[int, Any]:
        """Adjoints of all leaf nodes reached from ``output``.

        Every node at or before ``output`` is visited exactly once; nodes whose
        adjoint is zero are skipped without evaluating their rule.
        """
        mode = GradientMode(mode)
        adjoints: dict[int, Any] = {output: 1.0}
        leaves: dict[int, Any] = {}
        for idx in range(output, -1, -1):
            self.visits[idx] += 1
            adj = adjoints.pop(idx, None)
            if adj is None:
                continue
            node = self.nodes[idx]
            if not node.parents:
                leaves[idx] = adj
                continue
            try:
                rule = _RULES[node.kind]
            except KeyError:
                raise RuntimeError(f"no backward rule for op kind {node.kind!r}") from None
            for parent, contrib in zip(node.parents, rule(node, adj, self, mode)):
                if contrib is None:
                    continue
                if parent in adjoints:
                    adjoints[parent] = adjoints[parent] + contrib
                else:
                    adjoints[parent] = contrib
        return leaves


# --- backward rules ----------------------------------------------------------


def _rule_add(node, adj, tape, mode):
    return [c * adj for c in node.ctx]


def _rule_scalar_sum(node, adj, tape, mode):
    return [adj] * len(node.parents)


def _rule_weighted_sum(node, adj, tape, mode):
    return [None if w == 0 else w * adj for w in node.ctx["weights"]]


def _rule_scale_by_parameter(node, adj, tape, mode):
    controls = node.ctx
    return [np.einsum("ab,kab->k", adj.conj(), controls).real]


def _rule_matmul(node, adj, tape, mode):
    const = node.ctx
    return [const.conj().T @ adj]


def _rule_adjoint(node, adj, tape, mode):
    return [adj.conj().T]


def _rule_trace(node, adj, tape, mode):
    n = tape.value(node.parents[0]).shape[0]
    return [adj * np.eye(n, dtype=np.complex128)]


def _rule_inner(node, adj, tape, mode):
    # s = <C, X>; dC = Re(conj(sbar) <C, dX>)  =>  Xbar = C * sbar
    return [node.ctx * adj]


def _rule_abs2(node, adj, tape, mode):
    x = tape.value(node.parents[0])
    return [2.0 * adj * x]


def _rule_expm_apply(node, adj, tape, mode):
    h = tape.value(node.parents[0])
    x = tape.value(node.parents[1])
    y = node.value
    return expm_apply_vjp(h, x, y, adj, node.ctx, mode)


_RULES: dict[str, Callable] = {
    "add": _rule_add,
    "scalar-sum": _rule_scalar_sum,
    "scalar-weighted-sum": _rule_weighted_sum,
    "scale-by-parameter": _rule_scale_by_parameter,
    "matmul": _rule_matmul,
    "matvec": _rule_matmul,
    "adjoint": _rule_adjoint,
    "trace": _rule_trace,
    "inner": _rule_inner,
    "abs2": _rule_abs2,
    "expm-apply": _rule_expm_apply,
}


@dataclass(frozen=True)
class StepContext:
    """What an ``expm-apply`` node needs to differentiate itself."""

    dt: float
    shift: float
    cfg: ExpmConfig
    dense: bool  # form U_j explicitly (always in unitary mode; small state problems too)
    propagator: NDArray | None = None  # cached U_j when dense

    @property
    def coeff(self) -> complex:
        return -1j * self.dt / 2**self.cfg.squarings

    @property
    def phase(self) -> complex:
        return complex(np.exp(-1j * self.shift * self.dt))

    def generator(self, h: NDArray) -> NDArray:
        a = self.coeff * h
        a[np.diag_indices(h.shape[0])] -= self.coeff * self.shift
        return a


def expm_apply_forward(h: NDArray, x: NDArray, ctx: StepContext) -> tuple[NDArray, NDArray | None]:
    a = ctx.generator(h)
    if ctx.dense:
        u = ctx.phase * _taylor_matrix(a, ctx.cfg)
        return u @ x, u
    return ctx.phase * apply_taylor(a, x, ctx.cfg.taylor_order, 2**ctx.cfg.squarings), None


def expm_apply_vjp(h, x, y, ybar, ctx: StepContext, mode: GradientMode):
    """Adjoints ``(Hbar, Xbar)`` for ``Y = U(H) X``.

    Approximate mode uses ``dU = (-i dt dH) U``, exact when ``dH`` commutes
    with ``H``. Exact mode differentiates the truncated series and the
    squarings themselves.
    """
    cfg = ctx.cfg
    a = ctx.generator(h)
    a_dag = a.conj().T
    phase = ctx.phase
    p, n = cfg.taylor_order, cfg.squarings
    if mode is GradientMode.APPROX:
        if ctx.dense:
            xbar = ctx.propagator.conj().T @ ybar
        else:
            xbar = np.conj(phase) * apply_taylor(a_dag, ybar, p, 2**n)
        hbar = 1j * ctx.dt * (ybar @ y.conj().T)
        return hbar, xbar

    if ctx.dense:
        terms = [np.eye(h.shape[0], dtype=np.complex128)]
        for k in range(1, p + 1):
            terms.append(a @ terms[-1] / k)
        squares = [sum(terms)]
        for _ in range(n):
            squares.append(squares[-1] @ squares[-1])
        u = phase * squares[-1]
        xbar = u.conj().T @ ybar
        rbar = np.conj(phase) * (ybar @ x.conj().T)
        for r in reversed(squares[:-1]):
            r_dag = r.conj().T
            rbar = rbar @ r_dag + r_dag @ rbar
        abar = _taylor_vjp(a_dag, terms, rbar, p)
    else:
        zs = [x]
        for _ in range(2**n - 1):
            zs.append(apply_taylor(a, zs[-1], p))
        zbar = np.conj(phase) * ybar
        # abar is a sum of rank-S outer products; stack the factors and do one GEMM
        lefts, rights = [], []
        for z in reversed(zs):
            terms = [z]
            for k in range(1, p + 1):
                terms.append(a @ terms[-1] / k)
            g = zbar
            for k in range(p, 0, -1):
                lefts.append(g)
                rights.append(terms[k - 1] / k)
                g = zbar + (a_dag @ g) / k
            zbar = g
        abar = np.hstack(lefts) @ np.hstack(rights).conj().T
        xbar = zbar
    return np.conj(ctx.coeff) * abar, xbar


def _taylor_vjp(a_dag, terms, tbar, p):
    """Adjoint of ``A`` for ``T = sum_k t_k`` with ``t_k = A t_{k-1} / k``."""
    abar = np.zeros_like(a_dag)
    g = tbar
    for k in range(p, 0, -1):
        abar += (g @ terms[k - 1].conj().T) / k
        g = tbar + (a_dag @ g) / k
    return abar


# --- forward recording -------------------------------------------------------


def use_dense_steps(mode: str, dim: int, n_states: int, cfg: ExpmConfig) -> bool:
    """Whether to build each step propagator as a matrix.

    Unitary mode always does. In state mode the matrix-free path costs
    ``p 2^n`` products with an ``l x S`` block, against ``p + n`` products of
    ``l x l`` matrices; at small ``l`` the per-call overhead dominates and the
    dense path wins. The threshold is a measured crossover on one core.
    """
    if mode == "unitary":
        return True
    return dim <= 2**cfg.squarings * (2 * n_states + 2)


def expm_config_for(problem: ControlProblem, u: NDArray) -> ExpmConfig:
    return choose_pn(radius_bound(problem.hamiltonian, problem.bounds, u), problem.grid.dt)


@dataclass
class Recording:
    tape: Tape
    output: int
    inputs: list[int]
    objects: list[int]
    term_nodes: list[int]
    chain: NDArray[np.float64]
    report: CostReport
    cfg: ExpmConfig
    u: NDArray[np.float64]
    mode: str

    @property
    def total(self) -> float:
        return self.report.total

    def trajectory(self) -> Trajectory:
        objs = np.stack([self.tape.value(i) for i in self.objects])
        return Trajectory(self.mode, objs, self.u)


def record_forward(problem: ControlProblem, v, cfg: ExpmConfig | None = None,
                   terms=None) -> Recording:
    """Evolve the system and evaluate every cost term on a fresh tape.

    ``v`` holds the raw (pre-bound) variables. ``terms`` overrides the
    problem's cost terms, e.g. to differentiate a single contribution.
    """
    terms = problem.terms if terms is None else list(terms)
    check_modes(terms, problem.mode)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != problem.shape:
        raise ValueError(f"pulse grid shape {v.shape}, expected {problem.shape}")
    u = bounded_map(v, problem.bounds)
    chain = bounded_map_derivative(v, problem.bounds)
    if cfg is None:
        cfg = expm_config_for(problem, u)
    ham, grid = problem.hamiltonian, problem.grid
    dense = use_dense_steps(problem.mode, ham.dim, problem.initial_block().shape[1], cfg)

    tape = Tape()
    x = tape.add("constant", value=problem.initial_block())
    objects = [x]
    inputs = []
    per_step: dict[int, list[int]] = {i: [] for i in range(len(terms))}
    need_steps = [i for i, t in enumerate(terms) if t.kind in ("forbidden", "time_gate", "time_state")]
    t_effs = {i: terms[i].effective_target() for i in need_steps if terms[i].kind != "forbidden"}
    f_adj = {i: terms[i].forbidden.conj().T for i in need_steps if terms[i].kind == "forbidden"}

    for j in range(grid.steps):
        inp = tape.add("input", value=u[:, j])
        inputs.append(inp)
        h = tape.add("scale-by-parameter", [inp], ham.at(u[:, j]), ctx=ham.controls)
        ctx = StepContext(grid.dt, ham.drift_shift, cfg, dense)
        y, prop = expm_apply_forward(tape.value(h), tape.value(x), ctx)
        if prop is not None:
            ctx = StepContext(grid.dt, ham.drift_shift, cfg, True, prop)
        x = tape.add("expm-apply", [h, x], y, ctx)
        objects.append(x)
        for i in need_steps:
            if i in f_adj:
                proj = tape.add("matmul", [x], f_adj[i] @ y, ctx=f_adj[i])
                per_step[i].append(tape.add("abs2", [proj], float(np.vdot(tape.value(proj), tape.value(proj)).real)))
            else:
                s = tape.add("inner", [x], complex(np.vdot(t_effs[i], y)), ctx=t_effs[i])
                per_step[i].append(tape.add("abs2", [s], abs(tape.value(s)) ** 2))

    term_nodes = []
    n = grid.steps
    for i, term in enumerate(terms):
        kind = term.kind
        if kind in ("gate", "state", "composite"):
            t_eff = term.effective_target()
            s = tape.add("inner", [x], complex(np.vdot(t_eff, tape.value(x))), ctx=t_eff)
            sq = tape.add("abs2", [s], abs(tape.value(s)) ** 2)
            node = _weighted(tape, [sq], [-1.0], 1.0)
        elif kind in ("time_gate", "time_state"):
            node = _weighted(tape, per_step[i], [-1.0 / n] * n, 1.0)
        elif kind == "forbidden":
            node = _sum(tape, per_step[i])
        elif kind == "amplitude":
            node = _sum(tape, [tape.add("abs2", [k], float(np.dot(u[:, j], u[:, j])))
                               for j, k in enumerate(inputs)])
        elif kind == "variation":
            parts = []
            for j in range(1, n):
                d = tape.add("add", [inputs[j], inputs[j - 1]], u[:, j] - u[:, j - 1], ctx=(1.0, -1.0))
                parts.append(tape.add("abs2", [d], float(np.dot(tape.value(d), tape.value(d)))))
            node = _sum(tape, parts)
        else:
            raise RuntimeError(f"unhandled cost kind {kind}")
        term_nodes.append(node)

    weights = [t.weight for t in terms]
    output = _weighted(tape, term_nodes, weights, 0.0)
    values = tuple(float(tape.value(i)) for i in term_nodes)
    final = tape.value(objects[-1])
    report = CostReport(tuple(t.label for t in terms), values, tuple(weights),
                        float(tape.value(output)), primary_fidelity(terms, final[None]))
    return Recording(tape, output, inputs, objects, term_nodes, chain, report, cfg, u, problem.mode)


def _sum(tape: Tape, parents: list[int]) -> int:
    return tape.add("scalar-sum", parents, float(sum(tape.value(p) for p in parents)))


def _weighted(tape: Tape, parents: list[int], weights, bias: float) -> int:
    value = bias + sum(w * tape.value(p) for w, p in zip(weights, parents))
    return tape.add("scalar-weighted-sum", parents, float(value),
                    ctx={"weights": list(weights), "bias": bias})


def backward(rec: Recording, mode: GradientMode = GradientMode.EXACT) -> NDArray[np.float64]:
    """Gradient of the recorded total with respect to the raw variables ``v``."""
    leaves = rec.tape.backward(rec.output, mode)
    grad_u = np.zeros_like(rec.u)
    for j, idx in enumerate(rec.inputs):
        if idx in leaves:
            grad_u[:, j] = leaves[idx]
    return grad_u * rec.chain


def value_and_grad(problem: ControlProblem, v, mode: GradientMode = GradientMode.EXACT,
                   cfg: ExpmConfig | None = None, terms=None) -> tuple[CostReport, NDArray]:
    rec = record_forward(problem, v, cfg, terms)
    return rec.report, backward(rec, mode)
