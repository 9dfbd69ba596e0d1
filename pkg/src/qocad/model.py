"""Discretized control model: Hamiltonian, time grid and pulse parameterization.

Units: time in ns, Hamiltonian entries in rad/ns (a frequency ``f`` in GHz
enters as ``2*pi*f``), hbar = 1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigurationError, DimensionError
from .linalg import ComplexMatrix, as_matrix, hermiticity_error

HERMITIAN_TOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    steps: int
    dt: float

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigurationError(f"time grid needs at least one step, got {self.steps}")
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ConfigurationError(f"time step must be positive, got {self.dt}")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "dt", float(self.dt))

    @classmethod
    def from_duration(cls, total_time: float, steps: int) -> "TimeGrid":
        return cls(steps, total_time / steps)

    @property
    def total_time(self) -> float:
        return self.steps * self.dt

    def times(self) -> NDArray[np.float64]:
        """Times ``t_0 .. t_N`` of the stored trajectory points."""
        return np.arange(self.steps + 1) * self.dt


@dataclass(frozen=True, eq=False)
class ControlHamiltonian:
    """``H_j = H0 + sum_k u[k, j] * H_k``.

    Hermiticity violations only warn here; :meth:`validate` raises and is
    called before an optimization starts.
    """

    drift: ComplexMatrix
    controls: NDArray[np.complex128]
    names: tuple[str, ...] = ()

    def __post_init__(self):
        drift = as_matrix(self.drift)
        if drift.shape[0] != drift.shape[1]:
            raise DimensionError(f"drift must be square, got {drift.shape}")
        ctrls = np.asarray(self.controls, dtype=np.complex128)
        if ctrls.size == 0:
            ctrls = np.zeros((0,) + drift.shape, dtype=np.complex128)
        if ctrls.ndim == 2:
            ctrls = ctrls[None]
        if ctrls.ndim != 3 or ctrls.shape[1:] != drift.shape:
            raise DimensionError(
                f"controls must have shape (M, {drift.shape[0]}, {drift.shape[0]}), got {ctrls.shape}"
            )
        names = tuple(self.names) or tuple(f"u{k}" for k in range(ctrls.shape[0]))
        if len(names) != ctrls.shape[0]:
            raise ConfigurationError(f"{len(names)} control names for {ctrls.shape[0]} controls")
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "controls", ctrls)
        object.__setattr__(self, "names", names)
        bad = self.hermiticity_violations()
        if bad:
            warnings.warn(f"non-Hermitian operators: {', '.join(bad)}", stacklevel=2)

    @property
    def dim(self) -> int:
        return self.drift.shape[0]

    @property
    def n_controls(self) -> int:
        return self.controls.shape[0]

    def hermiticity_violations(self, tol: float = HERMITIAN_TOL) -> list[str]:
        bad = []
        if hermiticity_error(self.drift) > tol:
            bad.append("drift")
        for name, h in zip(self.names, self.controls):
            if hermiticity_error(h) > tol:
                bad.append(name)
        return bad

    def validate(self, tol: float = HERMITIAN_TOL) -> None:
        bad = self.hermiticity_violations(tol)
        if bad:
            raise ConfigurationError(f"non-Hermitian operators: {', '.join(bad)}")

    @property
    def drift_shift(self) -> float:
        """Mean diagonal of the drift; removed before exponentiation."""
        return float(np.trace(self.drift).real) / self.dim

    def at(self, u_column: ArrayLike) -> ComplexMatrix:
        u_column = np.asarray(u_column, dtype=np.float64)
        return self.drift + np.tensordot(u_column, self.controls, axes=1)


def hamiltonian_at(ham: ControlHamiltonian, u: ArrayLike, j: int) -> ComplexMatrix:
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[0] != ham.n_controls:
        raise DimensionError(f"pulse grid shape {u.shape} does not match {ham.n_controls} controls")
    if not 0 <= j < u.shape[1]:
        raise IndexError(f"time index {j} outside 0..{u.shape[1] - 1}")
    return ham.at(u[:, j])


def _bounds_array(bounds, m: int) -> NDArray[np.float64]:
    if bounds is None:
        return np.full(m, np.inf)
    b = np.array([np.inf if x is None else float(x) for x in np.ravel(bounds)], dtype=np.float64)
    if b.shape != (m,):
        raise DimensionError(f"{b.shape[0]} bounds for {m} controls")
    if np.any(b < 0) or np.any(np.isnan(b)):
        raise ConfigurationError("amplitude bounds must be non-negative")
    return b


def bounded_map(v: ArrayLike, bounds) -> NDArray[np.float64]:
    """Map raw variables to amplitudes: ``bound * tanh(v)`` per bounded row."""
    v = np.asarray(v, dtype=np.float64)
    b = _bounds_array(bounds, v.shape[0])
    finite = np.isfinite(b)
    u = v.copy()
    u[finite] = b[finite, None] * np.tanh(v[finite])
    return u


def bounded_map_derivative(v: ArrayLike, bounds) -> NDArray[np.float64]:
    v = np.asarray(v, dtype=np.float64)
    b = _bounds_array(bounds, v.shape[0])
    finite = np.isfinite(b)
    d = np.ones_like(v)
    d[finite] = b[finite, None] * (1.0 - np.tanh(v[finite]) ** 2)
    return d


def inverse_bounded_map(u: ArrayLike, bounds) -> NDArray[np.float64]:
    """Raw variables reproducing amplitudes ``u`` (saturated values are clipped)."""
    u = np.asarray(u, dtype=np.float64)
    b = _bounds_array(bounds, u.shape[0])
    v = u.copy()
    for k in np.flatnonzero(np.isfinite(b)):
        if b[k] == 0:
            v[k] = 0.0
            continue
        ratio = np.clip(u[k] / b[k], -1 + 2**-52, 1 - 2**-52)
        v[k] = np.arctanh(ratio)
    return v


@dataclass
class PulseGrid:
    """Raw optimizer variables ``v`` (M x N) plus per-control amplitude bounds.

    A bound of ``inf`` means the control is unbounded and ``u = v``.
    """

    raw: NDArray[np.float64]
    bounds: NDArray[np.float64] = field(default=None)

    def __post_init__(self):
        self.raw = np.array(self.raw, dtype=np.float64)
        if self.raw.ndim != 2:
            raise DimensionError(f"pulse grid must be 2-D (M x N), got {self.raw.shape}")
        if not np.all(np.isfinite(self.raw)):
            raise ValueError("pulse grid contains NaN or Inf")
        self.bounds = _bounds_array(self.bounds, self.raw.shape[0])

    @property
    def shape(self) -> tuple[int, int]:
        return self.raw.shape

    def amplitudes(self) -> NDArray[np.float64]:
        return bounded_map(self.raw, self.bounds)

    def chain_factor(self) -> NDArray[np.float64]:
        return bounded_map_derivative(self.raw, self.bounds)

    @classmethod
    def from_amplitudes(cls, u, bounds) -> "PulseGrid":
        u = np.asarray(u, dtype=np.float64)
        return cls(inverse_bounded_map(u, bounds), bounds)


@dataclass(frozen=True)
class SystemSpec:
    """Named physical parameters of a builtin system.

    ``parameters`` maps a name to ``(value, unit)`` as shown to users, e.g.
    ``"omega_q/2pi": (3.5, "GHz")``.
    """

    parameters: dict
    levels: tuple[int, ...] = ()

    def __post_init__(self):
        if any(n < 2 for n in self.levels):
            raise ConfigurationError(f"level counts must be >= 2, got {self.levels}")

    @property
    def dim(self) -> int:
        return int(np.prod(self.levels)) if self.levels else 0


@dataclass(eq=False)
class ControlProblem:
    """A complete optimization problem.

    ``initial`` is ``None`` for propagator (unitary-mode) problems, otherwise
    a normalized state vector or an ``(l, S)`` block of state columns.
    """

    name: str
    hamiltonian: ControlHamiltonian
    grid: TimeGrid
    terms: list
    bounds: NDArray[np.float64] = None
    initial: NDArray[np.complex128] | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        from .cost import check_modes

        self.bounds = _bounds_array(self.bounds, self.hamiltonian.n_controls)
        self.terms = list(self.terms)
        l = self.hamiltonian.dim
        if self.initial is not None:
            from .propagation import as_state_block

            block, _ = as_state_block(self.initial, l)
            self.initial = np.asarray(self.initial, dtype=np.complex128)
            cols = block.shape[1]
        else:
            cols = l
        for t in self.terms:
            for arr in (t.target, t.projector, t.forbidden):
                if arr is not None and arr.shape[0] != l:
                    raise DimensionError(f"{t.label}: dimension {arr.shape[0]} does not match {l}")
            if t.kind in ("state", "time_state") and cols != 1:
                raise ConfigurationError(f"{t.label} needs a single initial state")
            if t.kind == "composite" and t.target.shape[1] != cols:
                raise ConfigurationError(f"{t.label}: {t.target.shape[1]} targets for {cols} initial states")
        check_modes(self.terms, self.mode)

    @property
    def mode(self) -> str:
        return "unitary" if self.initial is None else "state"

    @property
    def shape(self) -> tuple[int, int]:
        return (self.hamiltonian.n_controls, self.grid.steps)

    def initial_block(self) -> NDArray[np.complex128]:
        if self.initial is None:
            return np.eye(self.hamiltonian.dim, dtype=np.complex128)
        x = np.asarray(self.initial, dtype=np.complex128)
        return x[:, None] if x.ndim == 1 else x

    def replace(self, **changes) -> "ControlProblem":
        fields = dict(name=self.name, hamiltonian=self.hamiltonian, grid=self.grid,
                      terms=self.terms, bounds=self.bounds, initial=self.initial,
                      metadata=dict(self.metadata))
        fields.update(changes)
        return ControlProblem(**fields)
