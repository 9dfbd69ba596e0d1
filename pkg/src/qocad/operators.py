"""Operator and state builders for spins, transmons and cavity modes."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError
from .linalg import ComplexMatrix, ComplexVector, as_matrix

_PAULI = {
    "i": np.eye(2, dtype=np.complex128),
    "x": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}


def pauli(axis: str) -> ComplexMatrix:
    try:
        return _PAULI[axis.lower()].copy()
    except KeyError:
        raise ValueError(f"unknown Pauli axis {axis!r}") from None


def _check_dim(dim: int) -> None:
    if dim < 2:
        raise ConfigurationError(f"level count must be >= 2, got {dim}")


def ladder(dim: int) -> ComplexMatrix:
    """Truncated lowering operator ``b`` with ``b[i, i+1] = sqrt(i+1)``."""
    _check_dim(dim)
    return np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(np.complex128)


def number_op(dim: int) -> ComplexMatrix:
    _check_dim(dim)
    return np.diag(np.arange(dim)).astype(np.complex128)


def anharmonic_term(dim: int, alpha: float) -> ComplexMatrix:
    """``(alpha/2) n (n - 1)`` for the number operator ``n``."""
    n = np.arange(dim, dtype=np.float64)
    _check_dim(dim)
    return np.diag(0.5 * alpha * n * (n - 1)).astype(np.complex128)


def embed(op, site: int, dims: Sequence[int]) -> ComplexMatrix:
    """Place ``op`` on subsystem ``site`` of a tensor product with identities."""
    op = as_matrix(op)
    if not 0 <= site < len(dims):
        raise IndexError(f"site {site} outside a {len(dims)}-part system")
    if op.shape != (dims[site], dims[site]):
        raise DimensionError(f"operator shape {op.shape} does not match level count {dims[site]}")
    out = np.eye(1, dtype=np.complex128)
    for i, d in enumerate(dims):
        out = np.kron(out, op if i == site else np.eye(d, dtype=np.complex128))
    return out


def basis_state(dim: int, index: int) -> ComplexVector:
    if not 0 <= index < dim:
        raise IndexError(f"basis index {index} outside dimension {dim}")
    psi = np.zeros(dim, dtype=np.complex128)
    psi[index] = 1.0
    return psi


def product_index(levels: Sequence[int], dims: Sequence[int]) -> int:
    """Flat index of ``|levels[0]> x |levels[1]> x ...``."""
    idx = 0
    for n, d in zip(levels, dims):
        if not 0 <= n < d:
            raise IndexError(f"level {n} outside 0..{d - 1}")
        idx = idx * d + n
    return idx


def _coherent_amplitudes(dim: int, lam: complex) -> ComplexVector:
    c = np.empty(dim, dtype=np.complex128)
    c[0] = math.exp(-abs(lam) ** 2 / 2)
    for n in range(1, dim):
        c[n] = c[n - 1] * lam / math.sqrt(n)
    return c


def coherent_truncation_weight(dim: int, lam: complex) -> float:
    """Probability weight of a coherent state lying above the truncation."""
    tail = 1.0 - float(np.sum(np.abs(_coherent_amplitudes(dim, lam)) ** 2))
    return max(tail, 0.0)


def coherent_state(dim: int, lam: complex) -> ComplexVector:
    """Truncated coherent state ``|lam>``, renormalized after truncation."""
    _check_dim(dim)
    c = _coherent_amplitudes(dim, lam)
    return c / np.linalg.norm(c)


def cat_state(dim: int, lam: complex) -> tuple[ComplexVector, float]:
    """Even cat ``(|lam> + |-lam>)/sqrt(2)``.

    Returns the renormalized state and the deviation of its squared norm from
    one before renormalization.
    """
    raw = (coherent_state(dim, lam) + coherent_state(dim, -lam)) / math.sqrt(2)
    norm_sq = float(np.vdot(raw, raw).real)
    return raw / math.sqrt(norm_sq), norm_sq - 1.0
