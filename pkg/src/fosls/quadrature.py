"""Quadrature rules on the reference triangle and the unit interval."""

from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy import special

from .objects import QuadratureRule
from .resources import MAX_QUADRATURE_DEGREE


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Return a positive rule on the reference triangle exact to `degree`.

    The rule is the conical product of a Gauss-Jacobi rule in the collapsed
    radial direction and a Gauss-Legendre rule along the collapsed edge, so
    every node is interior and every weight is positive.

    ```python
    >>> rule = triangle_rule(1)
    >>> rule.nodes, rule.weights
    (array([[0.33333333, 0.33333333]]), array([0.5]))
    >>> float(rule.integrate(rule.nodes[:, 0]))
    0.16666666666666666
    ```

    Args:
        degree (int): Polynomial exactness degree, between 1 and 20.

    Returns:
        QuadratureRule: Cached, immutable rule.

    Raises:
        ValueError: If the degree is not supported.
    """
    if not isinstance(degree, (int, np.integer)) or not 1 <= degree <= MAX_QUADRATURE_DEGREE:
        raise ValueError(
            f"Invalid quadrature degree: {degree} (supported 1-{MAX_QUADRATURE_DEGREE})"
        )
    n = int(degree) // 2 + 1
    xs, ws = special.roots_jacobi(n, 0.0, 1.0)
    s, s_weights = (1.0 + xs) / 2.0, ws / 4.0
    xt, wt = np.polynomial.legendre.leggauss(n)
    t, t_weights = (1.0 + xt) / 2.0, wt / 2.0

    ss, tt = np.meshgrid(s, t, indexing="ij")
    nodes = np.column_stack([(ss * (1.0 - tt)).ravel(), (ss * tt).ravel()])
    weights = np.outer(s_weights, t_weights).ravel()
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return QuadratureRule(degree=int(degree), nodes=nodes, weights=weights)


@lru_cache(maxsize=None)
def line_rule(n_points: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [0, 1] with `n_points` nodes.

    Args:
        n_points (int): Number of nodes, at least 1.

    Returns:
        Tuple[np.ndarray, np.ndarray]: Nodes and weights; weights sum to 1.

    Raises:
        ValueError: If fewer than one node is requested.
    """
    if n_points < 1:
        raise ValueError(f"Invalid number of line quadrature points: {n_points}")
    x, w = np.polynomial.legendre.leggauss(int(n_points))
    nodes, weights = (1.0 + x) / 2.0, w / 2.0
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def monomial_integral(a: int, b: int) -> float:
    """Exact integral of x^a y^b over the reference triangle, a! b! / (a+b+2)!."""
    return float(
        special.factorial(a, exact=True)
        * special.factorial(b, exact=True)
        / special.factorial(a + b + 2, exact=True)
    )
