"""Short-time propagators and forward evolution.

Each step propagator ``U_j = exp(-i H_j dt)`` is evaluated with a truncated
Taylor series plus scaling and squaring, with one global ``(p, n)`` chosen
up front from a bound on the Hamiltonian norm. The mean diagonal of the drift
is pulled out as a scalar phase first, which shrinks the norm bound without
changing the propagator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigurationError, DimensionError
from .linalg import ComplexMatrix, as_matrix, norm_bound
from .model import ControlHamiltonian, TimeGrid

SCALED_RADIUS = 0.5
DEFAULT_TOL = 1e-14


@dataclass(frozen=True)
class ExpmConfig:
    taylor_order: int
    squarings: int
    tolerance: float = DEFAULT_TOL

    def __post_init__(self):
        if self.taylor_order < 1 or self.squarings < 0 or not self.tolerance > 0:
            raise ConfigurationError(f"invalid expm configuration {self}")


def choose_pn(radius_bound: float, dt: float, tol: float = DEFAULT_TOL) -> ExpmConfig:
    """Global Taylor order and squaring count for ``exp(-i H dt)``.

    ``n`` is the fewest squarings bringing ``radius_bound * dt`` to at most
    0.5; ``p`` is the smallest order whose first omitted term at radius 0.5
    falls below ``tol``.
    """
    if radius_bound < 0 or dt <= 0:
        raise ValueError("radius bound must be >= 0 and dt > 0")
    x = radius_bound * dt
    n = 0 if x <= SCALED_RADIUS else max(0, math.ceil(math.log2(x / SCALED_RADIUS)))
    p = 1
    while SCALED_RADIUS ** (p + 1) / math.factorial(p + 1) >= tol:
        p += 1
    return ExpmConfig(p, n, tol)


def radius_bound(ham: ControlHamiltonian, bounds=None, u: ArrayLike | None = None) -> float:
    """Upper bound on the norm of any shifted step Hamiltonian.

    Bounded controls contribute ``bound * ||H_k||``; unbounded ones use the
    largest magnitude in ``u``.
    """
    shifted = ham.drift - ham.drift_shift * np.eye(ham.dim)
    total = norm_bound(shifted)
    b = np.full(ham.n_controls, np.inf) if bounds is None else np.asarray(bounds, dtype=float)
    for k in range(ham.n_controls):
        amp = b[k]
        if not np.isfinite(amp):
            if u is None:
                raise ConfigurationError("unbounded controls need pulse values to bound the radius")
            amp = float(np.max(np.abs(np.asarray(u)[k]))) if np.size(u) else 0.0
        if amp:
            total += amp * norm_bound(ham.controls[k])
    return total


def expm_taylor(m: ArrayLike, cfg: ExpmConfig) -> ComplexMatrix:
    """``[sum_{k<=p} (M/2^n)^k / k!]^(2^n)``."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"matrix exponential of non-square {m.shape}")
    return _taylor_matrix(m / 2**cfg.squarings, cfg)


def _taylor_matrix(a: ComplexMatrix, cfg: ExpmConfig) -> ComplexMatrix:
    term = np.eye(a.shape[0], dtype=np.complex128)
    total = term.copy()
    for k in range(1, cfg.taylor_order + 1):
        term = (a @ term) / k
        total += term
    for _ in range(cfg.squarings):
        total = total @ total
    return total


def apply_taylor(a: ComplexMatrix, x: NDArray, order: int, repeats: int = 1) -> NDArray:
    """Apply ``T(a)^repeats`` to ``x`` with nested matrix-vector products."""
    for _ in range(repeats):
        term = x
        acc = x.copy()
        for k in range(1, order + 1):
            term = (a @ term) / k
            acc += term
        x = acc
    return x


@dataclass(frozen=True)
class StepExponent:
    """Scaled generator ``A = -i dt (H_j - s I) / 2^n`` and phase ``exp(-i s dt)``."""

    a: ComplexMatrix
    phase: complex
    coeff: complex  # dA/d(u_k) = coeff * H_k


def step_exponent(ham: ControlHamiltonian, u_col: ArrayLike, dt: float, cfg: ExpmConfig) -> StepExponent:
    shift = ham.drift_shift
    h = ham.at(u_col)
    h[np.diag_indices(ham.dim)] -= shift
    coeff = -1j * dt / 2**cfg.squarings
    return StepExponent(coeff * h, complex(np.exp(-1j * shift * dt)), coeff)


def step_unitary(ham: ControlHamiltonian, u_col: ArrayLike, dt: float, cfg: ExpmConfig) -> ComplexMatrix:
    e = step_exponent(ham, u_col, dt, cfg)
    return e.phase * _taylor_matrix(e.a, cfg)


def apply_step(ham, u_col, dt, cfg, x: NDArray, exponent: StepExponent | None = None) -> NDArray:
    """``U_j x`` without forming ``U_j``."""
    e = exponent or step_exponent(ham, u_col, dt, cfg)
    return e.phase * apply_taylor(e.a, x, cfg.taylor_order, 2**cfg.squarings)


def apply_step_adjoint(ham, u_col, dt, cfg, x: NDArray, exponent: StepExponent | None = None) -> NDArray:
    """``U_j† x``, the exact adjoint of the truncated-series propagator."""
    e = exponent or step_exponent(ham, u_col, dt, cfg)
    return np.conj(e.phase) * apply_taylor(e.a.conj().T, x, cfg.taylor_order, 2**cfg.squarings)


@dataclass
class Trajectory:
    """Stored forward evolution ``X_0 .. X_N``.

    ``objects`` has shape ``(N+1, l, c)``: ``c = l`` for propagators and
    ``c = S`` for a block of ``S`` state columns. ``vector`` records that a
    single state was propagated, so :attr:`states` can drop the column axis.
    """

    mode: str
    objects: NDArray[np.complex128]
    u: NDArray[np.float64]
    vector: bool = False

    @property
    def steps(self) -> int:
        return self.objects.shape[0] - 1

    @property
    def final(self) -> NDArray:
        return self.states[-1]

    @property
    def states(self) -> NDArray:
        return self.objects[..., 0] if self.vector else self.objects


def _default_cfg(ham, u, grid, cfg):
    if cfg is not None:
        return cfg
    return choose_pn(radius_bound(ham, None, u), grid.dt)


def _check_pulses(ham: ControlHamiltonian, u: ArrayLike, grid: TimeGrid) -> NDArray[np.float64]:
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (ham.n_controls, grid.steps):
        raise DimensionError(f"pulses of shape {u.shape}, expected {(ham.n_controls, grid.steps)}")
    return u


def propagate_unitary(ham: ControlHamiltonian, u: ArrayLike, grid: TimeGrid,
                      cfg: ExpmConfig | None = None) -> Trajectory:
    """All ``K_j = U_{j-1} ... U_0`` with ``K_0 = I``; column ``j`` of ``u`` drives step ``j``."""
    u = _check_pulses(ham, u, grid)
    cfg = _default_cfg(ham, u, grid, cfg)
    out = np.empty((grid.steps + 1, ham.dim, ham.dim), dtype=np.complex128)
    out[0] = np.eye(ham.dim)
    for j in range(grid.steps):
        out[j + 1] = step_unitary(ham, u[:, j], grid.dt, cfg) @ out[j]
    return Trajectory("unitary", out, u)


def as_state_block(psi0: ArrayLike, dim: int, tol: float = 1e-10) -> tuple[NDArray, bool]:
    """Return ``psi0`` as an ``(l, S)`` block of normalized columns."""
    x = np.asarray(psi0, dtype=np.complex128)
    vector = x.ndim == 1
    if vector:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != dim:
        raise DimensionError(f"initial state of shape {np.shape(psi0)} for dimension {dim}")
    norms = np.linalg.norm(x, axis=0)
    if np.any(np.abs(norms - 1) > tol):
        raise ValueError(f"initial state is not normalized (norms {norms})")
    return x, vector


def propagate_state(psi0: ArrayLike, ham: ControlHamiltonian, u: ArrayLike, grid: TimeGrid,
                    cfg: ExpmConfig | None = None) -> Trajectory:
    """Evolve a state (or a block of state columns) by nested matrix-vector products."""
    u = _check_pulses(ham, u, grid)
    x, vector = as_state_block(psi0, ham.dim)
    cfg = _default_cfg(ham, u, grid, cfg)
    out = np.empty((grid.steps + 1,) + x.shape, dtype=np.complex128)
    out[0] = x
    for j in range(grid.steps):
        out[j + 1] = apply_step(ham, u[:, j], grid.dt, cfg, out[j])
    return Trajectory("state", out, u, vector)
