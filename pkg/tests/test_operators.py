import math

import numpy as np
import pytest

from qocad import operators as ops
from qocad.linalg import hermiticity_error

from .conftest import random_hermitian, random_state


def test_pauli_algebra():
    x, y, z = (ops.pauli(a) for a in "xyz")
    assert np.allclose(x @ y, 1j * z)
    for p in (x, y, z):
        assert hermiticity_error(p) == 0
        assert np.allclose(p @ p, np.eye(2))
    with pytest.raises(ValueError):
        ops.pauli("w")


def test_ladder_and_number():
    b = ops.ladder(2)
    assert np.count_nonzero(b) == 1 and b[0, 1] == 1
    b5 = ops.ladder(5)
    assert np.allclose(b5.conj().T @ b5, ops.number_op(5))
    assert np.allclose(np.diag(ops.number_op(4)), [0, 1, 2, 3])
    assert np.allclose(np.diag(ops.anharmonic_term(4, 2.0)), [0, 0, 2, 6])


def test_embed():
    assert np.array_equal(np.diag(ops.embed(ops.pauli("z"), 0, [2, 2])), [1, 1, -1, -1])
    with pytest.raises(IndexError):
        ops.embed(ops.pauli("z"), 2, [2, 2])


def test_embed_expectation(rng):
    a = random_hermitian(rng, 3)
    psi, phi = random_state(rng, 3), random_state(rng, 4)
    big = np.kron(psi, phi)
    lhs = np.vdot(big, ops.embed(a, 0, [3, 4]) @ big)
    assert abs(lhs - np.vdot(psi, a @ psi)) < 1e-12


def test_basis_and_product_index():
    assert ops.product_index((1, 0), (5, 5)) == 5
    assert ops.product_index((0, 3), (5, 5)) == 3
    e = ops.basis_state(4, 2)
    assert e[2] == 1 and np.linalg.norm(e) == 1


def test_coherent_overlap_and_cat_norm():
    lam = 2.0
    plus, minus = ops.coherent_state(22, lam), ops.coherent_state(22, -lam)
    assert abs(np.vdot(plus, minus).real - math.exp(-2 * lam**2)) < 1e-6
    cat, deviation = ops.cat_state(22, lam)
    assert abs(deviation - math.exp(-8)) < 1e-6
    assert abs(np.linalg.norm(cat) - 1) < 1e-12
    assert np.max(np.abs(cat[1::2])) < 1e-14  # even parity
    assert ops.coherent_truncation_weight(22, lam) < 1e-8
