import math
import tracemalloc

import numpy as np
import pytest

from qocad import analytic, autograd, cost, gradcheck
from qocad.autograd import GradientMode
from qocad.errors import ConfigurationError
from qocad.model import ControlHamiltonian, ControlProblem, TimeGrid, bounded_map
from qocad.operators import pauli
from qocad.propagation import choose_pn, radius_bound

from .conftest import eig_expm, make_problem, random_hamiltonian, random_state, random_unitary

SX = pauli("x")


def rabi_ham():
    return ControlHamiltonian(np.zeros((2, 2)), SX[None])


def test_c1_stationary_at_optimum():
    n, dt, amp = 10, 0.1, 0.8
    k_t = eig_expm(-1j * SX * amp * n * dt)
    g = analytic.grad_c1(rabi_ham(), np.full((1, n), amp), TimeGrid(n, dt), k_t)
    assert np.max(np.abs(g)) < 1e-12


def test_uncoupled_control_gets_zero_gradient(rng):
    h0 = random_hamiltonian(rng, 3, 1)
    ham = ControlHamiltonian(h0.drift, np.stack([h0.controls[0], np.zeros((3, 3))]))
    u = rng.normal(size=(2, 6))
    g = analytic.grad_c1(ham, u, TimeGrid(6, 0.01), random_unitary(rng, 3))
    assert np.any(g[0]) and not np.any(g[1])


def test_c2_trivial_dynamics():
    ham = ControlHamiltonian(np.zeros((2, 2)), np.zeros((1, 2, 2)))
    g = analytic.grad_c2(ham, np.ones((1, 5)), TimeGrid(5, 0.1), [1, 0], [0, 1])
    assert not np.any(g)


def test_c2_rabi_closed_form():
    n, dt, amp = 25, 0.04, 0.9
    theta = amp * n * dt
    g = analytic.grad_c2(rabi_ham(), np.full((1, n), amp), TimeGrid(n, dt), [1, 0], [0, 1])
    assert np.allclose(g, -dt * math.sin(2 * theta), atol=1e-13)


def test_c5_empty_forbidden_set():
    g = analytic.grad_c5(rabi_ham(), np.ones((1, 4)), TimeGrid(4, 0.1), [1, 0], np.zeros((2, 0)))
    assert g.shape == (1, 4) and not np.any(g)


def test_c5_sign_matches_fd():
    n, dt = 6, 0.1
    ham, grid = rabi_ham(), TimeGrid(n, dt)
    u = np.full((1, n), 1e-3)
    g = analytic.grad_c5(ham, u, grid, [1, 0], [1, 0])
    prob = ControlProblem("c5", ham, grid, [cost.forbidden_occupation([1, 0])], initial=np.array([1, 0]))
    cfg = choose_pn(radius_bound(ham, None, u), dt)
    fd = gradcheck.central_difference(lambda w: gradcheck.exact_cost(prob, w, cfg), u)
    # leaving psi0 lowers its occupation, so the gradient points toward larger |u|
    assert np.all(g < 0) and np.all(np.sign(fd) == np.sign(g))


def test_c7_pinned_at_target_and_single_step_reduction(rng):
    psi = random_state(rng, 2)
    ham = ControlHamiltonian(np.zeros((2, 2)), SX[None])
    assert not np.any(analytic.grad_c7(ham, np.zeros((1, 5)), TimeGrid(5, 0.1), psi, psi))
    ham = random_hamiltonian(rng, 3, 2)
    psi0, t = random_state(rng, 3), random_state(rng, 3)
    u = rng.normal(size=(2, 1))
    g7 = analytic.grad_c7(ham, u, TimeGrid(1, 0.05), psi0, t)
    g2 = analytic.grad_c2(ham, u, TimeGrid(1, 0.05), psi0, t)
    assert np.array_equal(g7, g2)


def test_c6_pinned_at_target(rng):
    k = random_unitary(rng, 2)
    ham = ControlHamiltonian(np.zeros((2, 2)), SX[None])
    assert not np.any(analytic.grad_c6(ham, np.zeros((1, 4)), TimeGrid(4, 0.1), np.eye(2)))


def test_c3_c4_closed_forms():
    assert not np.any(analytic.grad_c3(np.zeros((2, 3))))
    assert not np.any(analytic.grad_c4(np.zeros((2, 3))))
    assert not np.any(analytic.grad_c4(np.full((1, 5), 2.5)))
    u = np.array([[1.0, 2.0, 4.0]])
    assert analytic.grad_c4(u).tolist() == [[-2, -2, 4]]
    fd = gradcheck.central_difference(cost.c4_variation, u)
    assert np.max(np.abs(fd - analytic.grad_c4(u))) < 1e-9


@pytest.mark.parametrize("kind", ["gate", "state", "composite", "forbidden", "time_gate", "time_state"])
def test_cross_oracles(rng, kind):
    # first-order error scales with radius*dt; at 0.01 the normwise gap reaches ~3e-3
    prob, v = make_problem(rng, 4, 2, 10, kind, bounds=[2.0, None], radius_dt=0.002)
    cfg = autograd.expm_config_for(prob, bounded_map(v, prob.bounds))
    rep, g = analytic.analytic_value_and_grad(prob, v, cfg)
    rep_a, ga = autograd.value_and_grad(prob, v, GradientMode.APPROX, cfg)
    _, ge = autograd.value_and_grad(prob, v, GradientMode.EXACT, cfg)
    assert abs(rep.total - rep_a.total) < 1e-12
    assert gradcheck.relative_error(g, ga) < 1e-10
    assert gradcheck.relative_error(g, ge) < 1e-3


def test_c2_matches_matched_forward_fd(rng):
    prob, v = make_problem(rng, 8, 2, 6, "state")
    u0 = bounded_map(v, prob.bounds)
    cfg = autograd.expm_config_for(prob, u0)
    _, g = analytic.analytic_value_and_grad(prob, v, cfg)
    fd = gradcheck.central_difference(lambda w: gradcheck.matched_cost(prob, w, u0, cfg), v)
    assert gradcheck.relative_error(g, fd) < 1e-6


def test_assemble_gradient(rng):
    grid = rng.normal(size=(2, 4))
    term = cost.amplitude_penalty()
    assert np.array_equal(analytic.assemble_gradient([term], [grid]), grid)
    assert not np.any(analytic.assemble_gradient([term.with_weight(0)], [grid]))
    with pytest.raises(ValueError):
        analytic.assemble_gradient([], [])


def test_two_weighted_terms_vs_autograd(rng):
    ham = random_hamiltonian(rng, 4, 2)
    t, psi0 = random_state(rng, 4), random_state(rng, 4)
    terms = [cost.state_infidelity(t, 1.5), cost.time_optimal_state(t, 0.25), cost.variation_penalty(0.1)]
    prob = ControlProblem("pair", ham, TimeGrid(8, 0.004), terms, bounds=[1.0, 3.0], initial=psi0)
    v = rng.normal(size=(2, 8))
    _, g = analytic.analytic_value_and_grad(prob, v)
    _, ga = autograd.value_and_grad(prob, v, GradientMode.APPROX)
    assert gradcheck.relative_error(g, ga) < 1e-10


def test_global_phase_invariance(rng):
    ham = random_hamiltonian(rng, 3, 1)
    t, psi0 = random_state(rng, 3), random_state(rng, 3)
    u = rng.normal(size=(1, 6))
    grid = TimeGrid(6, 0.01)
    a = analytic.grad_c2(ham, u, grid, psi0, t)
    b = analytic.grad_c2(ham, u, grid, psi0, np.exp(1.1j) * t)
    assert np.max(np.abs(a - b)) < 1e-12


def test_reverse_reconstruction_returns_to_start(rng):
    for kind in ("gate", "time_state"):
        prob, v = make_problem(rng, 6, 2, 50, kind)
        u = bounded_map(v, prob.bounds)
        cfg = autograd.expm_config_for(prob, u)
        r = analytic.backward_sweep(prob.terms[0], prob.hamiltonian, u, prob.grid, cfg, prob.initial_block(),
                                    prob.mode == "unitary")
        assert r.residual < 1e-8 and not r.fallback


def test_fallback_to_stored_trajectory(rng, monkeypatch):
    prob, v = make_problem(rng, 4, 2, 12, "forbidden")
    _, g = analytic.analytic_value_and_grad(prob, v)
    monkeypatch.setattr(analytic, "RECONSTRUCTION_TOL", -1.0)
    u = bounded_map(v, prob.bounds)
    r = analytic.backward_sweep(prob.terms[0], prob.hamiltonian, u, prob.grid,
                                autograd.expm_config_for(prob, u), prob.initial_block(), False)
    assert r.fallback
    _, g2 = analytic.analytic_value_and_grad(prob, v)
    assert gradcheck.relative_error(g2, g) < 1e-12


def test_mode_mismatch_is_fatal(rng):
    ham = random_hamiltonian(rng, 2, 1)
    prob = ControlProblem("s", ham, TimeGrid(3, 0.1), [cost.state_infidelity([0, 1])], initial=np.array([1, 0]))
    with pytest.raises(ConfigurationError):
        analytic.analytic_value_and_grad(prob, np.zeros((1, 3)), terms=[cost.gate_infidelity(np.eye(2))])


@pytest.mark.parametrize("unitary", [True, False])
def test_memory_independent_of_steps(rng, unitary):
    ham = random_hamiltonian(rng, 24, 1)
    k, psi0, t = random_unitary(rng, 24), random_state(rng, 24), random_state(rng, 24)
    peaks = []
    for n in (10, 100, 1000):
        u = rng.normal(size=(1, n))
        grid = TimeGrid(n, 0.001)
        cfg = choose_pn(radius_bound(ham, None, u), grid.dt)
        tracemalloc.start()
        if unitary:
            g = analytic.grad_c6(ham, u, grid, k, cfg)
        else:
            g = analytic.grad_c7(ham, u, grid, psi0, t, cfg)
        _, peak = tracemalloc.get_traced_memory()
        tracemalloc.stop()
        peaks.append(peak - g.nbytes)  # the output grid itself is O(M N)
    assert max(peaks) / min(peaks) < 1.2
