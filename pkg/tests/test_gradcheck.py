import numpy as np
import pytest

from qocad import cost, gradcheck
from qocad.errors import ConfigurationError

from .conftest import make_problem


def test_relative_error_conventions():
    assert gradcheck.relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert gradcheck.relative_error(np.array([1e-3, 0]), np.zeros(2)) == pytest.approx(1e-3)
    assert gradcheck.relative_error(np.array([1.1, 0]), np.array([1.0, 0])) == pytest.approx(0.1)


def test_central_difference_on_polynomial():
    f = lambda v: float(np.sum(v**3))
    v = np.array([[0.3, -1.2, 2.0]])
    assert np.allclose(gradcheck.central_difference(f, v), 3 * v**2, rtol=1e-10)


@pytest.mark.parametrize("kind", ["gate", "state", "composite", "forbidden", "time_state", "variation"])
def test_random_problem_passes(rng, kind):
    prob, v = make_problem(rng, 4, 2, 10, kind)
    report = gradcheck.check_gradients(prob, v)
    assert report.passed, "\n".join(report.lines())


def test_zero_weight_term_reports_zero(rng):
    prob, v = make_problem(rng, 3, 1, 5, "state")
    prob = prob.replace(terms=[prob.terms[0].with_weight(0.0), cost.amplitude_penalty(0.0)])
    report = gradcheck.check_gradients(prob, v)
    for row in report.rows:
        assert (row.exact_vs_fd, row.analytic_vs_approx, row.analytic_vs_fd) == (0.0, 0.0, 0.0)


def test_corrupted_gradient_fails(rng):
    prob, v = make_problem(rng, 3, 1, 5, "gate")
    report = gradcheck.check_gradients(prob, v, corrupt=lambda g: g * 1.01)
    assert not report.passed
    assert any("FAIL" in line for line in report.lines())


def test_too_many_variables(rng):
    prob, v = make_problem(rng, 2, 3, 70, "state")
    with pytest.raises(ConfigurationError):
        gradcheck.check_gradients(prob, v)
