"""Cost-function contributions and their weighted total.

Every fidelity-type term reduces to ``|<T_eff, X>|^2`` for a fixed effective
target ``T_eff`` (target scaled by ``1/D``, or ``P_S T / S`` for the composite
case) and an evolved object ``X`` (propagator or block of states), with
``<A, B> = tr(A† B)``. The autograd and analytic gradient modules rely on the
same reduction through :meth:`CostTerm.effective_target`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigurationError, DimensionError
from .linalg import as_matrix, as_vector, unitarity_error

FIDELITY_KINDS = ("gate", "state", "composite", "time_gate", "time_state")
TRAJECTORY_KINDS = ("forbidden", "time_gate", "time_state")
PULSE_KINDS = ("amplitude", "variation")
KINDS = FIDELITY_KINDS[:3] + PULSE_KINDS + TRAJECTORY_KINDS

_REQUIRED_MODE = {
    "gate": "unitary",
    "time_gate": "unitary",
    "state": "state",
    "time_state": "state",
    "composite": "state",
    "forbidden": "state",
}

_LABELS = {
    "gate": "C1 gate infidelity",
    "state": "C2 state infidelity",
    "composite": "C2 composite state infidelity",
    "amplitude": "C3 amplitude",
    "variation": "C4 variation",
    "forbidden": "C5 forbidden occupation",
    "time_gate": "C6 time-optimal gate",
    "time_state": "C7 time-optimal state",
}

UNIT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CostTerm:
    """One weighted contribution ``alpha * C_mu``.

    Use the module-level constructors (:func:`gate_infidelity`, ...) rather
    than building this directly.
    """

    kind: str
    weight: float = 1.0
    target: NDArray | None = None
    projector: NDArray | None = None
    forbidden: NDArray | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown cost kind {self.kind!r}")
        if not (np.isfinite(self.weight) and self.weight >= 0):
            raise ConfigurationError(f"cost weight must be finite and >= 0, got {self.weight}")
        object.__setattr__(self, "weight", float(self.weight))
        if not self.label:
            object.__setattr__(self, "label", _LABELS[self.kind])

    @property
    def required_mode(self) -> str | None:
        return _REQUIRED_MODE.get(self.kind)

    @property
    def is_fidelity(self) -> bool:
        return self.kind in FIDELITY_KINDS

    def effective_target(self) -> NDArray:
        """``T_eff`` as an ``(l, c)`` array such that fidelity is ``|<T_eff, X>|^2``."""
        t = self.target
        if self.kind in ("gate", "time_gate"):
            return t / t.shape[0]
        if self.kind in ("state", "time_state"):
            return t[:, None]
        if self.kind == "composite":
            return self.projector @ t / t.shape[1]
        raise ConfigurationError(f"{self.kind} has no target")

    def with_weight(self, weight: float) -> "CostTerm":
        return CostTerm(self.kind, weight, self.target, self.projector, self.forbidden, self.label)


def _unitary(k, what):
    k = as_matrix(k)
    if k.shape[0] != k.shape[1]:
        raise DimensionError(f"{what} must be square, got {k.shape}")
    if unitarity_error(k) > UNIT_TOL * k.shape[0]:
        raise ConfigurationError(f"{what} is not unitary")
    return k


def _normalized(psi, what):
    psi = as_vector(psi)
    if abs(np.linalg.norm(psi) - 1) > UNIT_TOL:
        raise ConfigurationError(f"{what} is not normalized")
    return psi


def gate_infidelity(target, weight: float = 1.0) -> CostTerm:
    return CostTerm("gate", weight, target=_unitary(target, "target gate"))


def state_infidelity(target, weight: float = 1.0) -> CostTerm:
    return CostTerm("state", weight, target=_normalized(target, "target state"))


def composite_state_infidelity(targets, projector=None, weight: float = 1.0) -> CostTerm:
    """Composite infidelity over ``S`` target columns and a subspace projector."""
    t = np.asarray(targets, dtype=np.complex128)
    if t.ndim != 2:
        raise DimensionError("composite targets must be an (l, S) block")
    if t.shape[1] == 0:
        raise ConfigurationError("composite infidelity needs at least one state")
    for s in range(t.shape[1]):
        _normalized(t[:, s], f"composite target {s}")
    p = np.eye(t.shape[0], dtype=np.complex128) if projector is None else as_matrix(projector)
    if p.shape != (t.shape[0], t.shape[0]):
        raise DimensionError(f"projector shape {p.shape} for dimension {t.shape[0]}")
    return CostTerm("composite", weight, target=t, projector=p)


def amplitude_penalty(weight: float = 1.0) -> CostTerm:
    return CostTerm("amplitude", weight)


def variation_penalty(weight: float = 1.0) -> CostTerm:
    return CostTerm("variation", weight)


def forbidden_occupation(states, weight: float = 1.0) -> CostTerm:
    """Penalize occupation of each column (or listed vector) of ``states``."""
    f = np.asarray(states, dtype=np.complex128)
    if f.ndim == 1:
        f = f[:, None]
    for s in range(f.shape[1]):
        _normalized(f[:, s], f"forbidden state {s}")
    return CostTerm("forbidden", weight, forbidden=f)


def time_optimal_gate(target, weight: float = 1.0) -> CostTerm:
    return CostTerm("time_gate", weight, target=_unitary(target, "target gate"))


def time_optimal_state(target, weight: float = 1.0) -> CostTerm:
    return CostTerm("time_state", weight, target=_normalized(target, "target state"))


# --- direct evaluation -----------------------------------------------------


def c1_gate_infidelity(k_n, k_t, dim: int | None = None) -> float:
    k_n, k_t = as_matrix(k_n), as_matrix(k_t)
    if k_n.shape != k_t.shape:
        raise DimensionError(f"gate shapes {k_n.shape} and {k_t.shape} differ")
    d = dim or k_t.shape[0]
    return 1.0 - abs(np.vdot(k_t, k_n) / d) ** 2


def c2_state_infidelity(psi_n, psi_t) -> float:
    psi_n, psi_t = as_vector(psi_n), as_vector(psi_t)
    if psi_n.shape != psi_t.shape:
        raise DimensionError("state dimensions differ")
    return 1.0 - abs(np.vdot(psi_t, psi_n)) ** 2


def c2_composite(finals, targets, projector=None) -> float:
    """``1 - |(1/S) sum_s <T_s|P|Psi_s>|^2`` over columns of ``finals`` and ``targets``."""
    finals = np.asarray(finals, dtype=np.complex128)
    targets = np.asarray(targets, dtype=np.complex128)
    if finals.ndim != 2 or finals.shape != targets.shape:
        raise DimensionError(f"composite blocks {finals.shape} and {targets.shape}")
    s = targets.shape[1]
    if s == 0:
        raise ConfigurationError("composite infidelity needs at least one state")
    p = np.eye(targets.shape[0]) if projector is None else as_matrix(projector)
    return 1.0 - abs(np.vdot(targets, p @ finals) / s) ** 2


def c3_amplitude(u) -> float:
    u = np.asarray(u, dtype=np.float64)
    return float(np.sum(u * u))


def c4_variation(u) -> float:
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    d = np.diff(u, axis=1)
    return float(np.sum(d * d))


def _as_blocks(states) -> NDArray:
    x = np.asarray(states, dtype=np.complex128)
    if x.ndim == 2:
        x = x[..., None]
    if x.ndim != 3:
        raise DimensionError(f"expected a sequence of states, got shape {x.shape}")
    return x


def c5_forbidden(states, forbidden) -> float:
    """``sum_j sum_F |<F|Psi_j>|^2`` over the given steps (normally ``j = 1..N``)."""
    if states is None:
        raise ConfigurationError("forbidden-state cost needs the stored trajectory")
    x = _as_blocks(states)
    f = np.asarray(forbidden, dtype=np.complex128)
    if f.ndim == 1:
        f = f[:, None]
    if f.shape[0] != x.shape[1]:
        raise DimensionError("forbidden states do not match the state dimension")
    overlaps = np.einsum("lf,jls->jfs", f.conj(), x)
    return float(np.sum(np.abs(overlaps) ** 2))


def c6_time_optimal_gate(propagators, k_t, dim: int | None = None) -> float:
    """``1 - (1/N) sum_j |tr(K_T† K_j)/D|^2`` over the given ``K_1 .. K_N``."""
    if propagators is None:
        raise ConfigurationError("time-optimal cost needs the stored trajectory")
    ks = np.asarray(propagators, dtype=np.complex128)
    k_t = as_matrix(k_t)
    if ks.ndim != 3 or ks.shape[1:] != k_t.shape:
        raise DimensionError("propagator sequence does not match target")
    d = dim or k_t.shape[0]
    overlaps = np.einsum("ab,jab->j", k_t.conj(), ks) / d
    return 1.0 - float(np.mean(np.abs(overlaps) ** 2))


def c7_time_optimal_state(states, psi_t) -> float:
    """``1 - (1/N) sum_j |<Psi_T|Psi_j>|^2`` over the given ``Psi_1 .. Psi_N``."""
    if states is None:
        raise ConfigurationError("time-optimal cost needs the stored trajectory")
    x = np.asarray(states, dtype=np.complex128)
    psi_t = as_vector(psi_t)
    if x.ndim != 2 or x.shape[1] != psi_t.shape[0]:
        raise DimensionError("state sequence does not match target")
    return 1.0 - float(np.mean(np.abs(x @ psi_t.conj()) ** 2))


@dataclass
class CostReport:
    labels: tuple[str, ...]
    values: tuple[float, ...]
    weights: tuple[float, ...]
    total: float
    fidelity: float

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "fidelity": self.fidelity,
            "terms": [
                {"label": l, "value": v, "weight": w}
                for l, v, w in zip(self.labels, self.values, self.weights)
            ],
        }


def check_modes(terms, mode: str) -> None:
    for t in terms:
        need = t.required_mode
        if need is not None and need != mode:
            raise ConfigurationError(f"{t.label} needs a {need} trajectory, run is in {mode} mode")


def term_value(term: CostTerm, objects: NDArray, u: NDArray) -> float:
    """Raw value of one term on a stored ``(N+1, l, c)`` trajectory."""
    kind = term.kind
    if kind == "amplitude":
        return c3_amplitude(u)
    if kind == "variation":
        return c4_variation(u)
    if kind == "forbidden":
        return c5_forbidden(objects[1:], term.forbidden)
    t_eff = term.effective_target()
    if kind in ("gate", "state", "composite"):
        return 1.0 - abs(np.vdot(t_eff, objects[-1])) ** 2
    overlaps = np.einsum("ab,jab->j", t_eff.conj(), objects[1:])
    return 1.0 - float(np.mean(np.abs(overlaps) ** 2))


def primary_fidelity(terms, objects: NDArray) -> float:
    """Fidelity of the final object against the first fidelity-type term."""
    for t in terms:
        if t.is_fidelity:
            return abs(np.vdot(t.effective_target(), objects[-1])) ** 2
    return float("nan")


def evaluate_total(terms, trajectory, u) -> CostReport:
    """Weighted total ``sum_mu alpha_mu C_mu`` on a stored trajectory."""
    u = np.asarray(u, dtype=np.float64)
    check_modes(terms, trajectory.mode)
    objects = trajectory.objects
    values = tuple(term_value(t, objects, u) for t in terms)
    weights = tuple(t.weight for t in terms)
    total = float(sum(w * v for w, v in zip(weights, values)))
    return CostReport(tuple(t.label for t in terms), values, weights, total,
                      primary_fidelity(terms, objects))
