import numpy as np
import pytest
import sympy

from linsing.constraints import run_chain
from linsing.dynamics import primary_vector
from linsing.expr import constant_map, parse, to_text
from linsing.presymplectic import (as_singular_system, check_dual_invariance, lift, lifted_variables,
                                   theta_matches)
from linsing.symmetry import check_finite_symmetry
from linsing.system import SingularSystem

NAMES = sympy.symbols("x1 x2 x3 p1 p2 p3")


def _sym(text):
    return sympy.sympify(text.replace("^", "**"), locals={str(s): s for s in NAMES})


@pytest.fixture
def curved():
    return SingularSystem.from_text("x2, x1*x3, 0; sin(x1), 1, x3^2", "x1*x2; exp(x3)", 3)


def test_lifted_variables():
    assert lifted_variables(2, 1) == ("x1", "x2", "p1")


def test_s2_theta_and_hamiltonian(s2):
    lifted = lift(s2)
    names = lifted.theta.variables
    theta = [_sym(to_text(e, names)) for e in lifted.theta_x]
    assert [sympy.simplify(a - b) for a, b in zip(theta, _sym("-p2, p1, 0"))] == [0, 0, 0]
    assert sympy.simplify(_sym(lifted.H.to_text()) - _sym("p1*x1 + p2*x2")) == 0


def test_omega_is_skew_and_matches_hand(s2):
    lifted = lift(s2)
    Z = np.random.default_rng(0).normal(size=(10, 6))
    hand = np.zeros((6, 6))
    hand[0, 4], hand[4, 0] = -1.0, 1.0
    hand[1, 3], hand[3, 1] = 1.0, -1.0
    for z in Z:
        W = lifted.omega(z)
        assert np.array_equal(W, -W.T)
        np.testing.assert_array_equal(W, hand)


def test_closedness_on_curved_system(curved):
    lifted = lift(curved)
    Z = np.random.default_rng(1).uniform(-1, 1, (30, lifted.dim))
    assert max(lifted.closedness_residual(z) for z in Z) <= 1e-12
    for z in Z[:5]:
        W = lifted.omega(z)
        np.testing.assert_array_equal(W, -W.T)


def test_omega_matches_finite_difference_of_theta(curved):
    lifted = lift(curved)
    z = np.random.default_rng(2).uniform(-1, 1, lifted.dim)
    h = 1e-6
    J = np.column_stack([(lifted.theta.evaluate(z + h * e) - lifted.theta.evaluate(z - h * e)) / (2 * h)
                         for e in np.eye(lifted.dim)])
    np.testing.assert_allclose(lifted.omega(z), J - J.T, atol=1e-8)


def test_one_dimensional_lift_dynamics():
    sys = SingularSystem.from_text("1", "x1", 1)
    lifted = as_singular_system(lift(sys))
    np.testing.assert_allclose(primary_vector(lifted, [2.0, 3.0]), [2.0, -3.0])


def test_s2_lift_chain_hand_oracle(s2):
    lifted = as_singular_system(lift(s2))
    z = np.random.default_rng(3).normal(size=6)
    A = sympy.Matrix(lifted.A_at(z)).applyfunc(sympy.nsimplify)
    b = sympy.Matrix(lifted.b_at(z))
    assert A.rank() == 4
    assert A.rank() == A.row_join(b).rank()
    chain = run_chain(lifted, z)
    assert chain.stabilized and chain.dims == [6, 6]


def _dual_cases(s2, rot, rot_inv, rot_matrix):
    I3 = constant_map(np.eye(3), 3)
    return [
        (rot, rot_inv, rot_matrix),
        (parse("2*x1; 2*x2; 2*x3", 3), parse("x1/2; x2/2; x3/2", 3), constant_map(2 * np.eye(3), 3)),
        (parse("x1 + 1; x2; x3", 3), parse("x1 - 1; x2; x3", 3), I3),
        (parse("2*x1; 2*x2; 2*x3", 3), parse("x1/2; x2/2; x3/2", 3), I3),
    ]


def test_dual_verdicts_follow_b_invariance(s2, rot, rot_inv, rot_matrix):
    Z = np.random.default_rng(4).uniform(-1, 1, (20, 6))
    verdicts = []
    for phi, phi_inv, Phi in _dual_cases(s2, rot, rot_inv, rot_matrix):
        rep = check_dual_invariance(s2, phi, Phi, Z, phi_inv)
        base = check_finite_symmetry(s2, phi, Phi, Z[:, :3]).condition("b_invariance").verdict
        assert rep.condition("H_invariance").verdict == base
        assert rep.extra["verdicts_agree"]
        verdicts.append(base)
    assert verdicts == ["pass", "pass", "fail", "fail"]


def test_dual_without_inverse(s2, rot, rot_matrix):
    Z = np.random.default_rng(5).uniform(-1, 1, (10, 6))
    rep = check_dual_invariance(s2, rot, rot_matrix, Z)
    assert rep.passed and theta_matches(rep)


def test_lift_requires_expressions(s2):
    with pytest.raises(TypeError):
        lift(s2.scaled(2.0))


def test_s1_lift(s1):
    lifted = lift(s1)
    names = lifted.theta.variables
    theta = [_sym(to_text(e, names)) for e in lifted.theta_x]
    assert [sympy.simplify(a - b) for a, b in zip(theta, _sym("p1, 0"))] == [0, 0]
    assert sympy.expand(_sym(lifted.H.to_text()) - _sym("p1*x2 + p2*x1")) == 0


def test_zero_matrix_lift_constrains_to_critical_points():
    sys = SingularSystem.from_text("0, 0", "x1^2 - x2", 2)
    lifted = as_singular_system(lift(sys))
    z = np.array([0.5, 0.3, 2.0])
    assert not lifted.A_at(z).any()
    assert run_chain(lifted, z).failed_level == 1
    assert run_chain(lifted, [0.0, 0.0, 0.0]).stabilized
