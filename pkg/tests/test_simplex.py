import numpy as np
import pytest
from scipy.optimize import linprog

from llot.errors import NumericalError, ValidationError
from llot.simplex import solve_standard_form


def test_simple_lp():
    # min x0 + 2 x1  s.t.  x0 + x1 = 1
    res = solve_standard_form(np.array([1.0, 2.0]), np.array([[1.0, 1.0]]),
                              np.array([1.0]))
    assert res.objective == pytest.approx(1.0)
    assert np.allclose(res.x, [1.0, 0.0])
    assert res.y[0] == pytest.approx(1.0)


def test_negative_rhs_handled():
    # -x0 - x1 = -1 is the same constraint with a flipped row
    res = solve_standard_form(np.array([1.0, 2.0]), np.array([[-1.0, -1.0]]),
                              np.array([-1.0]))
    assert res.objective == pytest.approx(1.0)


def test_redundant_row_dropped():
    a = np.array([[1.0, 1.0, 0.0],
                  [0.0, 1.0, 1.0],
                  [1.0, 2.0, 1.0]])  # row3 = row1 + row2
    b = np.array([1.0, 1.0, 2.0])
    c = np.array([1.0, 1.0, 1.0])
    res = solve_standard_form(c, a, b)
    assert np.allclose(a @ res.x, b, atol=1e-10)
    assert res.objective == pytest.approx(1.0)


def test_infeasible_detected():
    a = np.array([[1.0, 1.0], [1.0, 1.0]])
    b = np.array([1.0, 2.0])
    with pytest.raises(ValidationError, match="infeasible"):
        solve_standard_form(np.array([1.0, 1.0]), a, b)


def test_unbounded_detected():
    # min -x0 with x0 - x1 = 0: both can grow without bound
    a = np.array([[1.0, -1.0]])
    b = np.array([0.0])
    with pytest.raises(NumericalError, match="unbounded"):
        solve_standard_form(np.array([-1.0, 0.0]), a, b)


def test_degenerate_lp_terminates():
    # multiple constraints active at a vertex (degenerate basic solutions)
    a = np.array([[1.0, 1.0, 1.0, 0.0],
                  [1.0, 0.0, 0.0, 1.0]])
    b = np.array([1.0, 1.0])
    c = np.array([0.0, 1.0, 1.0, 1.0])
    res = solve_standard_form(c, a, b)
    assert res.objective == pytest.approx(0.0)
    assert np.allclose(a @ res.x, b, atol=1e-12)


@pytest.mark.parametrize("seed", range(6))
def test_random_lp_against_scipy(seed):
    rng = np.random.default_rng(seed)
    m, n = 5, 12
    a = rng.uniform(0.0, 1.0, size=(m, n))
    x_feas = rng.uniform(0.1, 1.0, size=n)
    b = a @ x_feas
    c = rng.uniform(-1.0, 1.0, size=n)
    ref = linprog(c, A_eq=a, b_eq=b, bounds=(0, None), method="highs")
    res = solve_standard_form(c, a, b)
    assert res.objective == pytest.approx(ref.fun, abs=1e-9)
    # duals certify: objective equals b . y and reduced costs are nonnegative
    assert res.objective == pytest.approx(float(b @ res.y), abs=1e-9)
    assert np.min(c - res.y @ a) >= -1e-9
