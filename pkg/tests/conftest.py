import numpy as np
import pytest

from qocad import cost
from qocad.model import ControlHamiltonian, ControlProblem, TimeGrid
from qocad.propagation import radius_bound


def random_hermitian(rng, dim, scale=1.0):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * (a + a.conj().T) / 2


def random_unitary(rng, dim):
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_state(rng, dim):
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


def random_hamiltonian(rng, dim, n_controls):
    return ControlHamiltonian(random_hermitian(rng, dim),
                              np.stack([random_hermitian(rng, dim) for _ in range(n_controls)]))


def eig_expm(m):
    """Oracle: exp(m) for anti-Hermitian m via the spectral decomposition of i*m."""
    w, q = np.linalg.eigh(1j * m)
    return (q * np.exp(-1j * w)) @ q.conj().T


def small_dt(ham, bounds, u, target=0.01):
    """Step size putting radius * dt at ``target``."""
    return target / radius_bound(ham, bounds, u)


def make_problem(rng, dim, n_controls, steps, kind, bounds=None, radius_dt=0.01):
    """Random problem carrying a single cost term of ``kind`` plus raw variables."""
    ham = random_hamiltonian(rng, dim, n_controls)
    v = rng.uniform(-1, 1, size=(n_controls, steps))
    from qocad.model import bounded_map

    u = bounded_map(v, bounds if bounds is not None else [None] * n_controls)
    dt = radius_dt / radius_bound(ham, bounds, u)
    grid = TimeGrid(steps, dt)
    psi0 = random_state(rng, dim)
    initial = psi0
    if kind == "gate":
        term = cost.gate_infidelity(random_unitary(rng, dim))
        initial = None
    elif kind == "time_gate":
        term = cost.time_optimal_gate(random_unitary(rng, dim))
        initial = None
    elif kind == "state":
        term = cost.state_infidelity(random_state(rng, dim))
    elif kind == "time_state":
        term = cost.time_optimal_state(random_state(rng, dim))
    elif kind == "composite":
        s = min(2, dim)
        initial = np.linalg.qr(rng.normal(size=(dim, s)) + 1j * rng.normal(size=(dim, s)))[0]
        targets = np.linalg.qr(rng.normal(size=(dim, s)) + 1j * rng.normal(size=(dim, s)))[0]
        proj = np.diag((np.arange(dim) < max(1, dim - 1)).astype(float))
        term = cost.composite_state_infidelity(targets, proj)
    elif kind == "forbidden":
        term = cost.forbidden_occupation(np.eye(dim)[:, [dim - 1]])
    elif kind == "amplitude":
        term = cost.amplitude_penalty()
    elif kind == "variation":
        term = cost.variation_penalty()
    else:
        raise ValueError(kind)
    return ControlProblem(f"random-{kind}", ham, grid, [term], bounds=bounds, initial=initial), v


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
