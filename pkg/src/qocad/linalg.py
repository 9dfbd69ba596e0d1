"""Dense complex linear algebra used by every other module.

Matrices and vectors are plain ``numpy`` arrays of dtype ``complex128``.
The helpers here add shape validation on top of numpy so that a mismatch
surfaces as a :class:`~qocad.errors.DimensionError` rather than a silent
broadcast.
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import DimensionError

ComplexMatrix = NDArray[np.complex128]
ComplexVector = NDArray[np.complex128]
RealMatrix = NDArray[np.float64]


def as_matrix(a: ArrayLike) -> ComplexMatrix:
    """Return ``a`` as a finite, non-empty 2-D complex array."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] == 0 or m.shape[1] == 0:
        raise DimensionError(f"expected a non-empty matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains NaN or Inf")
    return m


def as_vector(x: ArrayLike) -> ComplexVector:
    v = np.asarray(x, dtype=np.complex128)
    if v.ndim != 1 or v.shape[0] == 0:
        raise DimensionError(f"expected a non-empty vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains NaN or Inf")
    return v


def _square(a: ComplexMatrix, what: str) -> None:
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{what} requires a square matrix, got {a.shape}")


def matmul(a: ArrayLike, b: ArrayLike) -> ComplexMatrix:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def matvec(a: ArrayLike, x: ArrayLike) -> ComplexVector:
    a, x = as_matrix(a), as_vector(x)
    if a.shape[1] != x.shape[0]:
        raise DimensionError(f"cannot apply {a.shape} matrix to vector of length {x.shape[0]}")
    return a @ x


def adjoint(a: ArrayLike) -> ComplexMatrix:
    return as_matrix(a).conj().T


def trace(a: ArrayLike) -> complex:
    a = as_matrix(a)
    _square(a, "trace")
    return complex(np.trace(a))


def inner(x: ArrayLike, y: ArrayLike) -> complex:
    """``x†y``, conjugate-linear in ``x``."""
    x, y = as_vector(x), as_vector(y)
    if x.shape != y.shape:
        raise DimensionError(f"inner product of lengths {x.shape[0]} and {y.shape[0]}")
    return complex(np.vdot(x, y))


def hs_inner(a: ArrayLike, b: ArrayLike) -> complex:
    """Hilbert-Schmidt inner product ``tr(A†B)``."""
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError(f"Hilbert-Schmidt product of {a.shape} and {b.shape}")
    return complex(np.vdot(a, b))


def frobenius_norm(a: ArrayLike) -> float:
    return float(np.linalg.norm(as_matrix(a)))


def norm_bound(a: ArrayLike) -> float:
    """Cheap upper bound on the spectral radius of a Hermitian matrix.

    Both the Frobenius norm and the induced 1-norm bound the spectral norm of
    a normal matrix; the smaller of the two is returned.
    """
    a = as_matrix(a)
    one_norm = float(np.max(np.sum(np.abs(a), axis=0)))
    return min(float(np.linalg.norm(a)), one_norm)


def kron(a: ArrayLike, b: ArrayLike) -> ComplexMatrix:
    return np.kron(as_matrix(a), as_matrix(b))


def kron_vec(x: ArrayLike, y: ArrayLike) -> ComplexVector:
    return np.kron(as_vector(x), as_vector(y))


def hermiticity_error(a: ArrayLike) -> float:
    """Frobenius norm of ``A - A†``."""
    a = as_matrix(a)
    _square(a, "hermiticity check")
    return float(np.linalg.norm(a - a.conj().T))


def unitarity_error(u: ArrayLike) -> float:
    """Frobenius norm of ``U†U - I``."""
    u = as_matrix(u)
    _square(u, "unitarity check")
    return float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])))


def realify(h: ArrayLike) -> RealMatrix:
    """Map a complex ``l x l`` matrix to the real ``2l x 2l`` block form.

    ``H -> [[Re H, -Im H], [Im H, Re H]]``. This is a ring homomorphism, and
    together with :func:`realify_state` it intertwines matrix-vector products.
    """
    h = as_matrix(h)
    _square(h, "realify")
    re, im = h.real, h.imag
    return np.block([[re, -im], [im, re]])


def realify_state(psi: ArrayLike) -> NDArray[np.float64]:
    psi = as_vector(psi)
    return np.concatenate([psi.real, psi.imag])


def complexify(r: ArrayLike) -> ComplexMatrix:
    """Inverse of :func:`realify`; checks the block structure."""
    r = np.asarray(r, dtype=np.float64)
    n2 = r.shape[0]
    if r.ndim != 2 or r.shape[1] != n2 or n2 % 2:
        raise DimensionError(f"not a realified matrix: shape {r.shape}")
    n = n2 // 2
    a, b, c, d = r[:n, :n], r[:n, n:], r[n:, :n], r[n:, n:]
    if not (np.array_equal(a, d) and np.array_equal(b, -c)):
        raise ValueError("matrix lacks the [[A, -B], [B, A]] block structure")
    return a + 1j * c


def complexify_state(x: ArrayLike) -> ComplexVector:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] % 2:
        raise DimensionError(f"not a realified state: shape {x.shape}")
    n = x.shape[0] // 2
    return x[:n] + 1j * x[n:]
