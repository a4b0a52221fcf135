import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from linsing.dual import Dual
from linsing.errors import ArityError, DomainError, ParseError, ShapeError, UnknownIdentifier
from linsing.expr import FunctionMap, SmoothMap, constant_map, derivative, parse


def test_precedence_and_unary_minus():
    f = parse("1 + 2*x1^2 - x2/4; -x1^2", 2)
    np.testing.assert_allclose(f.evaluate([3.0, 8.0]), [1 + 18 - 2, 9.0])


def test_functions_and_pi():
    f = parse("sin(pi/2) + cos(0) + exp(0) + log(1) + sqrt(4) + tanh(0); pow(x1, 3)", 1)
    np.testing.assert_allclose(f.evaluate([2.0]), [5.0, 8.0])


def test_matrix_rows_by_semicolon_and_newline():
    a = parse("1, x1; x2, 0", 2)
    b = parse("1, x1\n x2, 0", 2)
    assert a.shape == b.shape == (2, 2)
    np.testing.assert_array_equal(a.evaluate([5, 6]), b.evaluate([5, 6]))


def test_vector_from_single_row():
    f = parse("x1, x2, 3", 2, kind="vector")
    assert f.shape == (3,)


def test_ragged_rows_rejected():
    with pytest.raises(ShapeError):
        parse("1, 2; 3", 1)


def test_parse_error_position():
    with pytest.raises(ParseError) as info:
        parse("x1 + * 2", 1)
    assert info.value.column is not None


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier):
        parse("x1 + y", 1)
    with pytest.raises(UnknownIdentifier):
        parse("foo(x1)", 1)


def test_arity_error_on_wrong_argument_count():
    with pytest.raises(ArityError):
        parse("sin(x1, x1)", 1)
    with pytest.raises(ArityError):
        parse("x3", 2)
    with pytest.raises(ArityError):
        parse("x1", 1).evaluate([1.0, 2.0])


def test_domain_error_reports_entry():
    f = parse("x1; log(x1 - 1)", 1)
    with pytest.raises(DomainError) as info:
        f.evaluate([0.5])
    assert info.value.entry == 1


def test_domain_error_in_batch():
    f = parse("1/x1", 1)
    with pytest.raises(DomainError):
        f.evaluate_batch(np.array([[1.0], [0.0]]))


def test_batch_matches_pointwise():
    f = parse("sin(x1)*x2, x1^3; exp(x2), 2", 2)
    X = np.random.default_rng(1).normal(size=(7, 2))
    B = f.evaluate_batch(X)
    for x, row in zip(X, B):
        np.testing.assert_allclose(row, f.evaluate(x), rtol=0, atol=1e-15)


def test_custom_variable_names():
    f = parse("x*y", variables=("x", "y"))
    assert f.evaluate([2, 3])[0] == 6.0


def test_constant_map():
    f = constant_map(np.eye(2), 3)
    assert f.shape == (2, 2) and f.arity == 3
    np.testing.assert_array_equal(f.jacobian([1, 2, 3]), np.zeros((2, 2, 3)))


def test_dual_arithmetic():
    x = Dual(2.0, 1.0)
    y = (x * x + 3 * x) / x - 1
    assert y.re == pytest.approx(4.0) and y.du == pytest.approx(1.0)


def test_jacobian_shapes():
    A = parse("x1, x2*x3; 0, sin(x1)", 3)
    assert A.jacobian([0.1, 0.2, 0.3]).shape == (2, 2, 3)
    b = parse("x1*x2; x3", 3)
    np.testing.assert_allclose(b.jacobian([1.0, 2.0, 3.0]), [[2, 1, 0], [0, 0, 1]])


SYMS = sympy.symbols("x1 x2")
TEXTS = [
    "sin(x1)*exp(x2) + x1^3",
    "log(1 + x1^2) / (2 + cos(x2))",
    "sqrt(1 + x1^2 + x2^2) * tanh(x1 - x2)",
    "(x1 - x2)^4 - 3*x1*x2",
]


@pytest.mark.parametrize("text", TEXTS)
def test_jacobian_against_sympy(text):
    f = parse(text, 2)
    g = sympy.sympify(text.replace("^", "**"), locals=dict(zip(("x1", "x2"), SYMS)))
    x = np.array([0.3, -0.7])
    ref = [float(sympy.diff(g, s).subs(dict(zip(SYMS, x)))) for s in SYMS]
    np.testing.assert_allclose(f.jacobian(x)[0], ref, rtol=1e-13, atol=1e-14)


@pytest.mark.parametrize("text", TEXTS)
def test_symbolic_derivative_matches_dual(text):
    f = parse(text, 2)
    x = np.array([0.4, 0.9])
    for i in range(2):
        d = SmoothMap([[derivative(f.entry(0), i)]], f.variables, "vector")
        assert d.evaluate(x)[0] == pytest.approx(f.jacobian(x)[0, i], rel=1e-13, abs=1e-14)


def test_function_map_fd_is_second_order():
    g = FunctionMap(lambda x: np.array([math.sin(3 * x[0])]), 1, (1,))
    exact = 3 * math.cos(3 * 0.4)
    errs = []
    for h in (1e-2, 5e-3):
        g.fd_step = h
        errs.append(abs(g.jacobian([0.4])[0, 0] - exact))
    assert 3.5 < errs[0] / errs[1] < 4.5


finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@st.composite
def expressions(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        return draw(st.sampled_from(["x1", "x2", "1.5", "2", "0.25"]))
    kind = draw(st.sampled_from(["bin", "call", "pow", "neg"]))
    a = draw(expressions(depth=depth - 1))
    if kind == "bin":
        b = draw(expressions(depth=depth - 1))
        return f"({a} {draw(st.sampled_from('+-*'))} {b})"
    if kind == "call":
        return f"{draw(st.sampled_from(['sin', 'cos', 'tanh']))}({a})"
    if kind == "pow":
        return f"({a})^{draw(st.integers(0, 3))}"
    return f"-{a}"


@settings(max_examples=60, deadline=None)
@given(expressions(), finite, finite)
def test_to_text_round_trip(text, a, b):
    f = parse(text, 2)
    g = parse(f.to_text(), 2)
    assert g.to_text() == f.to_text()
    x = [a, b]
    np.testing.assert_allclose(g.evaluate(x), f.evaluate(x), rtol=1e-12, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(expressions(), finite, finite)
def test_dual_jacobian_matches_central_difference(text, a, b):
    f = parse(text, 2)
    fd = FunctionMap(f.evaluate, 2, (1,), fd_step=1e-5)
    x = [a, b]
    J = f.jacobian(x)
    scale = 1 + np.abs(J).max()
    np.testing.assert_allclose(J, fd.jacobian(x), atol=1e-5 * scale)
