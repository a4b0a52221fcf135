import numpy as np
import pytest

from linsing.errors import NotProjectable, ShapeError
from linsing.expr import parse
from linsing.variations import (Variation, composition_rule_check, eqfon_residual, flow_invariance_residual,
                                flow_transform, generalized_lie_derivative, induced_base_field,
                                infinitesimal_variation, invariance_test, inverse_variation_check,
                                linearity_test, projectability_test, remainder_ratio_ok)

X_UNIT = parse("1", 1)
ZERO1 = parse("0", 1)


def var(text, n=1):
    return Variation.from_text(text, n)


def test_infinitesimal_variation_examples():
    assert infinitesimal_variation(var("x1"), [0.7])[0] == 0.0
    assert infinitesimal_variation(var("(x1 + eps)^2"), [0.7])[0] == pytest.approx(1.4)
    w = infinitesimal_variation(var("sin(x1 + 3*eps)"), [0.2])[0]
    assert infinitesimal_variation(var("sin(x1 - 3*eps)"), [0.2])[0] == pytest.approx(-w)


def test_composition_rule_examples():
    f, g = var("x1 + eps"), var("eps*x1")
    assert composition_rule_check(g, f, [0.4]) <= 1e-12
    assert composition_rule_check(var("x1"), var("2*x1"), [0.4]) == 0.0


def test_composition_shape_mismatch():
    with pytest.raises(ShapeError):
        composition_rule_check(var("x1; x2", 2), var("x1"), [0.1])


def test_inverse_variation():
    f = var("exp(eps)*x1 + eps")
    g = var("exp(-eps)*(x1 - eps)")
    assert inverse_variation_check(f, g, [0.3]) <= 1e-12


def test_generalized_lie_derivative_examples():
    exp = parse("exp(x1)", 1)
    assert generalized_lie_derivative(exp, X_UNIT, parse("x1", 1), [0.5])[0] == pytest.approx(0.0, abs=1e-15)
    assert generalized_lie_derivative(parse("x1^2", 1), X_UNIT, ZERO1, [1.5])[0] == pytest.approx(3.0)
    assert generalized_lie_derivative(parse("sin(x1)", 1), ZERO1, ZERO1, [1.5])[0] == 0.0


def test_flow_transform_examples():
    sq = parse("x1^2", 1)
    assert flow_transform(sq, ZERO1, ZERO1, 0.3).evaluate([0.7])[0] == pytest.approx(0.49, abs=1e-15)
    assert flow_transform(sq, X_UNIT, ZERO1, 0.1).evaluate([1.0])[0] == pytest.approx(1.21, abs=1e-12)
    exp = parse("exp(x1)", 1)
    h = flow_transform(exp, X_UNIT, parse("x1", 1), 0.4).evaluate_batch([[0.0], [0.5]])
    np.testing.assert_allclose(h[:, 0], np.exp([0.0, 0.5]), atol=1e-8)


def test_invariance_exp_pair():
    S = np.linspace(-1, 1, 5)[:, None]
    rep = invariance_test(parse("exp(x1)", 1), X_UNIT, parse("x1", 1), [0.2, 0.1], S)
    assert rep.extra["invariant"] and rep.extra["agree"] and rep.passed


def test_invariance_square_not_invariant():
    S = np.linspace(0.5, 1.5, 5)[:, None]
    rep = invariance_test(parse("x1^2", 1), X_UNIT, ZERO1, [0.2, 0.1, 0.05], S)
    assert not rep.extra["invariant"] and rep.extra["agree"]
    assert remainder_ratio_ok(rep)
    assert rep.condition("h_eps[eps=0.1]").max_residual == pytest.approx(0.1 * 3 + 0.01, rel=1e-9)


def test_invariance_zero_fields():
    rep = invariance_test(parse("sin(x1)", 1), ZERO1, ZERO1, [0.1], [[0.3]])
    assert rep.extra["invariant"]


def test_invariance_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        invariance_test(parse("x1", 1), ZERO1, ZERO1, [0.0], [[0.3]])


def test_projectability_examples():
    Z = np.random.default_rng(0).uniform(-1, 1, (10, 2))
    rep = projectability_test(parse("sin(x1); x1*x2", 2), 1, Z)
    assert rep.passed
    np.testing.assert_allclose(np.ravel(rep.extra["X_at_samples"]), np.sin(Z[:, 0]))
    rep = projectability_test(parse("x1 + x2; x2", 2), 1, Z)
    assert not rep.passed and rep.max_residual() == pytest.approx(1.0)
    assert projectability_test(parse("0; 0", 2), 1, Z).passed
    assert induced_base_field(parse("sin(x1); x1*x2", 2), 1).evaluate([0.3])[0] == pytest.approx(np.sin(0.3))


def test_linearity_examples():
    Z = np.random.default_rng(1).uniform(-1, 1, (10, 2))
    rep = linearity_test(parse("cos(x1); exp(x1)*x2", 2), 1, Z)
    assert rep.passed and rep.extra["agree"]
    rep = linearity_test(parse("cos(x1); x2^2", 2), 1, [[0.0, 1.0]], lambdas=(2.0,))
    assert rep.condition("scaling").max_residual == pytest.approx(2.0)
    assert rep.verdict == "fail" and rep.extra["agree"]
    rep = linearity_test(parse("0; x2 + 1", 2), 1, Z)
    assert rep.condition("second_difference").verdict == "fail"
    assert rep.extra["zero_offset"] == pytest.approx(1.0)


def test_linearity_requires_projectable():
    with pytest.raises(NotProjectable):
        linearity_test(parse("x2; x2", 2), 1, [[0.1, 0.2]])


def test_flow_invariance_and_eqfon():
    X = parse("-x2 + x1^2; x1", 2)
    assert flow_invariance_residual(X, [0.3, 0.2], 0.5) <= 1e-6
    h_o = parse("x1*x2; sin(x1)", 2)
    Y = parse("x2; -x1", 2)
    assert eqfon_residual(h_o, X, Y, [0.3, 0.2], 0.4) <= 1e-6
