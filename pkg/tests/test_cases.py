"""Test functions for the manufactured solutions."""

import numpy as np
import pytest
from fosls.cases import (
    IndicatorProfile,
    dirichlet_case,
    get_case,
    indicator_case,
    ode_reference,
    smooth_case,
)


def _laplacian(u, x, y, h):
    """Five point Laplacian, Richardson-extrapolated twice from steps h, h / 2 and h / 4."""

    def stencil(step):
        return (
            u(x + step, y) + u(x - step, y) + u(x, y + step) + u(x, y - step) - 4 * u(x, y)
        ) / step**2

    def fourth_order(step):
        return (4 * stencil(step / 2) - stencil(step)) / 3

    return (16 * fourth_order(h / 2) - fourth_order(h)) / 15


def _sample_points():
    rng = np.random.default_rng(11)
    radius = np.sqrt(rng.uniform(0.01, 0.9, 40))
    angle = rng.uniform(0, 2 * np.pi, 40)
    return radius * np.cos(angle), radius * np.sin(angle)


def test_smooth_case_values() -> None:
    """u(0) = 1, f(0) = gamma and a vanishing normal derivative on the circle."""
    for gamma in (1.0, 10.0):
        case = smooth_case(gamma)
        zero = np.array(0.0)
        assert float(case.u(zero, zero)) == pytest.approx(1.0)
        assert float(case.f(zero, zero)) == pytest.approx(gamma)
        angle = np.linspace(0, 2 * np.pi, 9)
        x, y = np.cos(angle), np.sin(angle)
        normal_derivative = np.sum(case.grad_u(x, y) * np.stack([x, y], axis=-1), axis=-1)
        assert np.max(np.abs(normal_derivative)) < 1e-12
        assert case.regularity == float("inf")
        assert case.interface_radius is None


@pytest.mark.parametrize("builder", [smooth_case, dirichlet_case])
def test_cases_solve_the_equation(builder) -> None:
    """-Laplace(u) + gamma u = f at interior points to 1e-8."""
    gamma = 2.0
    case = builder(gamma)
    x, y = _sample_points()
    lhs = -_laplacian(case.u, x, y, 8e-3) + gamma * case.u(x, y)
    rhs = case.f(x, y)
    assert np.max(np.abs(lhs - rhs)) <= 1e-8


@pytest.mark.parametrize("builder", [smooth_case, dirichlet_case])
def test_gradients_match_values(builder) -> None:
    """grad_u is the gradient of u."""
    case = builder()
    x, y = _sample_points()
    step = 1e-6
    fd = np.stack(
        [
            (case.u(x + step, y) - case.u(x - step, y)) / (2 * step),
            (case.u(x, y + step) - case.u(x, y - step)) / (2 * step),
        ],
        axis=-1,
    )
    assert np.max(np.abs(fd - case.grad_u(x, y))) < 1e-6


def test_dirichlet_case_boundary() -> None:
    """The smoke case vanishes on the circle."""
    angle = np.linspace(0, 2 * np.pi, 13)
    case = dirichlet_case()
    assert np.max(np.abs(case.u(np.cos(angle), np.sin(angle)))) < 1e-15
    assert case.bc_mode.value == "dirichlet"


def test_indicator_profile_conditions() -> None:
    """u'(0) = 0, u'(1) = 0 and u, u' continuous at the interface."""
    for gamma in (0.5, 1.0, 10.0):
        profile = IndicatorProfile(gamma, 0.5)
        assert abs(profile.derivative(0.0)) < 1e-14
        assert abs(profile.derivative(1.0)) < 1e-12
        below, above = 0.5 - 1e-12, 0.5 + 1e-12
        assert profile.value(below) == pytest.approx(profile.value(above), abs=1e-10)
        assert profile.derivative(below) == pytest.approx(profile.derivative(above), abs=1e-10)


def test_indicator_second_derivative_jump() -> None:
    """u'' jumps by one across the interface, as f does."""
    profile = IndicatorProfile(1.0, 0.5)
    step = 1e-5

    def second(r):
        return (profile.derivative(r + step) - profile.derivative(r - step)) / (2 * step)

    jump = second(0.5 + 2 * step) - second(0.5 - 2 * step)
    assert jump == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("gamma", [0.5, 1.0, 4.0])
def test_indicator_matches_ode(gamma: float) -> None:
    """Closed-form profile agrees with an independent shooting solution."""
    profile = IndicatorProfile(gamma, 0.5)
    radii = np.linspace(0.0, 1.0, 41)
    values, slopes = ode_reference(gamma, radii)
    assert np.max(np.abs(profile.value(radii) - values)) < 1e-9
    assert np.max(np.abs(profile.derivative(radii) - slopes)) < 1e-9


def test_indicator_case_is_radial() -> None:
    """The indicator case depends on r only, with gradient along x / r."""
    case = indicator_case()
    angle = np.linspace(0, 2 * np.pi, 7)
    for r in (0.2, 0.7):
        x, y = r * np.cos(angle), r * np.sin(angle)
        values = case.u(x, y)
        assert np.max(values) - np.min(values) < 1e-14
        radial = np.sum(case.grad_u(x, y) * np.stack([-y, x], axis=-1), axis=-1)
        assert np.max(np.abs(radial)) < 1e-14
    assert float(case.f(np.array(0.3), np.array(0.0))) == 1.0
    assert float(case.f(np.array(0.7), np.array(0.0))) == 0.0
    assert case.interface_radius == 0.5
    assert case.regularity == 0.5


def test_indicator_gradient_at_origin() -> None:
    """The gradient is continuous through the centre."""
    case = indicator_case(2.0)
    grad = case.grad_u(np.array([0.0, 1e-8]), np.array([0.0, 0.0]))
    assert np.all(np.isfinite(grad))
    assert np.allclose(grad[0], 0.0)


def test_invalid_profiles() -> None:
    """Nonpositive gamma and radii outside (0, 1) are rejected."""
    with pytest.raises(ValueError, match="Invalid gamma"):
        IndicatorProfile(0.0, 0.5)
    with pytest.raises(ValueError, match="Invalid interface radius"):
        IndicatorProfile(1.0, 1.0)
    with pytest.raises(ValueError, match="Invalid interface radius"):
        IndicatorProfile(1.0, 0.0)


def test_get_case() -> None:
    """Cases are found by name."""
    assert get_case("smooth").name == "smooth"
    assert get_case("indicator", 3.0).gamma == 3.0
    assert get_case("dirichlet-smoke").bc_mode.value == "dirichlet"
    with pytest.raises(ValueError, match="Invalid case"):
        get_case("square")
