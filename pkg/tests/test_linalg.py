import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qocad import linalg
from qocad.operators import pauli

I2 = np.eye(2)


def loop_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]), dtype=complex)
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def crandn(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def test_matmul_pauli_cases():
    assert np.array_equal(linalg.matmul(I2, pauli("x")), pauli("x"))
    assert np.array_equal(linalg.matmul(pauli("x"), pauli("x")), I2)


def test_matmul_matches_loop(rng):
    a, b = crandn(rng, 3, 3), crandn(rng, 3, 3)
    assert np.max(np.abs(linalg.matmul(a, b) - loop_matmul(a, b))) < 1e-13


def test_matvec(rng):
    x = crandn(rng, 4)
    assert np.array_equal(linalg.matvec(np.eye(4), x), x)
    assert np.array_equal(linalg.matvec(pauli("x"), [1, 0]), np.array([0, 1]))
    a = crandn(rng, 4, 4)
    oracle = np.array([sum(a[i, k] * x[k] for k in range(4)) for i in range(4)])
    assert np.max(np.abs(linalg.matvec(a, x) - oracle)) < 1e-13


def test_shape_errors():
    with pytest.raises(linalg.DimensionError):
        linalg.matmul(np.eye(2), np.eye(3))
    with pytest.raises(linalg.DimensionError):
        linalg.matvec(np.eye(2), np.ones(3))


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        linalg.as_matrix([[np.nan, 0], [0, 1]])


def test_scalar_helpers(rng):
    assert linalg.trace(np.eye(5)) == 5
    x = crandn(rng, 6)
    val = linalg.inner(x, x)
    assert abs(val.imag) < 1e-15 and np.isclose(val.real, np.linalg.norm(x) ** 2)
    assert linalg.hs_inner(pauli("x"), pauli("x")) == 2
    a = crandn(rng, 3, 3)
    assert np.array_equal(linalg.adjoint(linalg.adjoint(a)), a)
    assert np.isclose(linalg.frobenius_norm(a), np.linalg.norm(a))


def test_norm_bound_dominates_spectral_radius(rng):
    for _ in range(20):
        a = crandn(rng, 5, 5)
        a = a + a.conj().T
        assert linalg.norm_bound(a) >= np.max(np.abs(np.linalg.eigvalsh(a))) - 1e-12


def test_kron_cases(rng):
    assert np.array_equal(np.diag(linalg.kron(I2, pauli("z"))), [1, -1, 1, -1])
    a = crandn(rng, 3, 3)
    assert np.array_equal(linalg.kron(a, np.eye(1)), a)
    b = crandn(rng, 2, 2)
    x, y = crandn(rng, 2), crandn(rng, 2)
    a2 = crandn(rng, 2, 2)
    lhs = linalg.kron(a2, b) @ linalg.kron_vec(x, y)
    assert np.max(np.abs(lhs - linalg.kron_vec(a2 @ x, b @ y))) < 1e-13


def test_realify_cases(rng):
    assert np.array_equal(linalg.realify(np.eye(3)), np.eye(6))
    assert np.array_equal(linalg.realify(1j * np.eye(1)), [[0, -1], [1, 0]])
    h, psi = crandn(rng, 3, 3), crandn(rng, 3)
    got = linalg.realify(h) @ linalg.realify_state(psi)
    assert np.max(np.abs(got - linalg.realify_state(h @ psi))) < 1e-13
    assert np.allclose(linalg.complexify(linalg.realify(h)), h)
    assert np.allclose(linalg.complexify_state(linalg.realify_state(psi)), psi)


matrices = st.integers(min_value=1, max_value=6).flatmap(
    lambda n: st.tuples(st.just(n), st.integers(min_value=0, max_value=2**31 - 1))
)


@settings(max_examples=40, deadline=None)
@given(matrices)
def test_realify_is_ring_homomorphism(spec):
    n, seed = spec
    rng = np.random.default_rng(seed)
    a, b = crandn(rng, n, n), crandn(rng, n, n)
    r = linalg.realify
    assert np.max(np.abs(r(a @ b) - r(a) @ r(b))) < 1e-13 * max(1, np.abs(a).max() * np.abs(b).max() * n)
    assert np.max(np.abs(r(a + b) - (r(a) + r(b)))) < 1e-13
    assert np.max(np.abs(r(a.conj().T) - r(a).T)) == 0


@settings(max_examples=40, deadline=None)
@given(matrices)
def test_associativity_and_trace_cyclicity(spec):
    n, seed = spec
    rng = np.random.default_rng(seed)
    a, b, c = crandn(rng, n, n), crandn(rng, n, n), crandn(rng, n, n)
    lhs, rhs = linalg.matmul(linalg.matmul(a, b), c), linalg.matmul(a, linalg.matmul(b, c))
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(lhs)
    assert abs(linalg.trace(a @ b) - linalg.trace(b @ a)) <= 1e-12 * max(1.0, abs(linalg.trace(a @ b)))


def test_error_measures():
    assert linalg.hermiticity_error(pauli("y")) == 0
    assert linalg.unitarity_error(pauli("y")) < 1e-15
    assert linalg.hermiticity_error(np.array([[0, 1], [0, 0]])) > 0
