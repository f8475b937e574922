"""Test functions for the quadrature rules."""

import numpy as np
import pytest
from fosls.quadrature import line_rule, monomial_integral, triangle_rule


def test_degree_one_rule() -> None:
    """The lowest rule is the centroid rule."""
    rule = triangle_rule(1)
    assert rule.nodes.shape == (1, 2)
    assert np.allclose(rule.nodes[0], [1 / 3, 1 / 3], atol=1e-15)
    assert np.allclose(rule.weights, [0.5], atol=1e-15)


@pytest.mark.parametrize("degree", range(1, 21))
def test_weights_positive_and_nodes_interior(degree: int) -> None:
    """Every rule has interior nodes and positive weights summing to the area."""
    rule = triangle_rule(degree)
    x, y = rule.nodes[:, 0], rule.nodes[:, 1]
    assert np.all(rule.weights > 0)
    assert np.all(x > 0) and np.all(y > 0) and np.all(x + y < 1)
    assert abs(rule.weights.sum() - 0.5) < 1e-14


@pytest.mark.parametrize("degree", [1, 2, 5, 8, 13, 20])
def test_monomial_exactness(degree: int) -> None:
    """Rules integrate every monomial up to their degree."""
    rule = triangle_rule(degree)
    x, y = rule.nodes[:, 0], rule.nodes[:, 1]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = monomial_integral(a, b)
            assert abs(rule.integrate(x**a * y**b) - exact) < 1e-13


def test_monomial_integral_values() -> None:
    """Closed form a! b! / (a + b + 2)!."""
    assert monomial_integral(0, 0) == pytest.approx(0.5)
    assert monomial_integral(1, 0) == pytest.approx(1 / 6)
    assert monomial_integral(3, 2) == pytest.approx(1 / 420)
    rule = triangle_rule(5)
    x, y = rule.nodes[:, 0], rule.nodes[:, 1]
    assert rule.integrate(x**3 * y**2) == pytest.approx(1 / 420, abs=1e-15)


def test_rules_are_cached_and_read_only() -> None:
    """Repeated requests return the same immutable rule."""
    assert triangle_rule(7) is triangle_rule(7)
    rule = triangle_rule(7)
    with pytest.raises(ValueError):
        rule.weights[0] = 1.0


@pytest.mark.parametrize("degree", [0, 21, -3])
def test_unsupported_degree(degree: int) -> None:
    """Degrees outside 1-20 are rejected."""
    with pytest.raises(ValueError, match="Invalid quadrature degree"):
        triangle_rule(degree)


def test_line_rule() -> None:
    """Gauss-Legendre on [0, 1] integrates s^k exactly up to 2n - 1."""
    nodes, weights = line_rule(4)
    assert np.all((nodes > 0) & (nodes < 1))
    for k in range(8):
        assert weights @ nodes**k == pytest.approx(1 / (k + 1), abs=1e-15)
    with pytest.raises(ValueError, match="Invalid number"):
        line_rule(0)
