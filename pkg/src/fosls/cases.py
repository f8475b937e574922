"""Manufactured solutions of -Laplace(u) + gamma u = f on the unit disk."""

import logging
from typing import Tuple

import numpy as np
from scipy import special
from scipy.integrate import solve_ivp

from .objects import BoundaryMode, CaseName, ManufacturedCase
from .resources import DEFAULT_GAMMA, DEFAULT_INTERFACE_RADIUS

_LOGGER = logging.getLogger(__name__)

_ODE_START = 1e-3
_ODE_RTOL = 1e-12
_ODE_ATOL = 1e-14
_MAX_CONDITION = 1e14


def _radius(x, y):
    return np.hypot(x, y)


def smooth_case(gamma: float = DEFAULT_GAMMA) -> ManufacturedCase:
    """Smooth Neumann case `u = cos(2 pi r^2)`.

    ```python
    >>> case = smooth_case(1.0)
    >>> float(case.u(np.array(0.0), np.array(0.0)))
    1.0
    ```

    Args:
        gamma (float): Reaction coefficient, positive.

    Returns:
        ManufacturedCase: Exact solution with infinite regularity.
    """

    def u(x, y):
        return np.cos(2 * np.pi * (x**2 + y**2))

    def grad_u(x, y):
        factor = -4 * np.pi * np.sin(2 * np.pi * (x**2 + y**2))
        return np.stack([factor * x, factor * y], axis=-1)

    def f(x, y):
        r2 = x**2 + y**2
        return (
            8 * np.pi * np.sin(2 * np.pi * r2)
            + 16 * np.pi**2 * r2 * np.cos(2 * np.pi * r2)
            + gamma * np.cos(2 * np.pi * r2)
        )

    return ManufacturedCase(
        name=CaseName.SMOOTH.value,
        gamma=gamma,
        regularity=float("inf"),
        bc_mode=BoundaryMode.NEUMANN,
        u=u,
        grad_u=grad_u,
        f=f,
    )


def dirichlet_case(gamma: float = DEFAULT_GAMMA) -> ManufacturedCase:
    """Dirichlet smoke case `u = 1 - r^2`, `f = 4 + gamma (1 - r^2)`."""

    def u(x, y):
        return 1.0 - x**2 - y**2

    def grad_u(x, y):
        return np.stack([-2.0 * x, -2.0 * y], axis=-1)

    def f(x, y):
        return 4.0 + gamma * (1.0 - x**2 - y**2)

    return ManufacturedCase(
        name=CaseName.DIRICHLET_SMOKE.value,
        gamma=gamma,
        regularity=float("inf"),
        bc_mode=BoundaryMode.DIRICHLET,
        u=u,
        grad_u=grad_u,
        f=f,
    )


class IndicatorProfile:
    """Radial solution for the right-hand side `f = 1` on `r <= radius`.

    Solves `-u'' - u'/r + gamma u = f` with `u'(0) = 0` and `u'(1) = 0`:

        u = 1/gamma + A I0(k r)          for r <= radius,
        u = B I0(k r) + C K0(k r)        for r > radius,

    with `k = sqrt(gamma)` and `A`, `B`, `C` from continuity of `u` and `u'`
    at the interface and the Neumann condition.

    Args:
        gamma (float): Reaction coefficient, positive.
        radius (float): Interface radius in (0, 1).

    Raises:
        ValueError: If an argument is out of range or the matching system is
            numerically singular.
    """

    def __init__(self, gamma: float = DEFAULT_GAMMA, radius: float = DEFAULT_INTERFACE_RADIUS):
        if gamma <= 0:
            raise ValueError(f"Invalid gamma: {gamma}")
        if not 0.0 < radius < 1.0:
            raise ValueError(f"Invalid interface radius: {radius}")
        self.gamma = float(gamma)
        self.radius = float(radius)
        self.kappa = float(np.sqrt(gamma))
        z, one = self.kappa * radius, self.kappa
        matrix = np.array(
            [
                [special.i0(z), -special.i0(z), -special.k0(z)],
                [special.i1(z), -special.i1(z), special.k1(z)],
                [0.0, special.i1(one), -special.k1(one)],
            ]
        )
        if not np.all(np.isfinite(matrix)) or np.linalg.cond(matrix) > _MAX_CONDITION:
            raise ValueError(f"Invalid matching system for gamma={gamma}")
        self.a, self.b, self.c = np.linalg.solve(matrix, [-1.0 / self.gamma, 0.0, 0.0])

    def value(self, r) -> np.ndarray:
        """u(r)."""
        r = np.asarray(r, dtype=float)
        z = self.kappa * r
        inner = 1.0 / self.gamma + self.a * special.i0(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            outer = self.b * special.i0(z) + self.c * special.k0(z)
        return np.where(r <= self.radius, inner, outer)

    def derivative(self, r) -> np.ndarray:
        """u'(r)."""
        r = np.asarray(r, dtype=float)
        z, k = self.kappa * r, self.kappa
        inner = self.a * k * special.i1(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            outer = k * (self.b * special.i1(z) - self.c * special.k1(z))
        return np.where(r <= self.radius, inner, outer)

    def derivative_over_r(self, r) -> np.ndarray:
        """u'(r) / r, continued by its limit `A gamma / 2` at the origin."""
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, 1.0)
        return np.where(r > 0, self.derivative(safe) / safe, 0.5 * self.a * self.gamma)

    def source(self, r) -> np.ndarray:
        """f(r)."""
        return np.where(np.asarray(r) <= self.radius, 1.0, 0.0)


def indicator_case(
    gamma: float = DEFAULT_GAMMA, radius: float = DEFAULT_INTERFACE_RADIUS
) -> ManufacturedCase:
    """Neumann case with the indicator right-hand side of the disk `r <= radius`.

    `f` lies in H^s for every s < 1/2; the case reports regularity 1/2.

    Args:
        gamma (float): Reaction coefficient, positive.
        radius (float): Radius of the jump of `f`.

    Returns:
        ManufacturedCase: Radially symmetric exact solution.
    """
    profile = IndicatorProfile(gamma, radius)

    def u(x, y):
        return profile.value(_radius(x, y))

    def grad_u(x, y):
        factor = profile.derivative_over_r(_radius(x, y))
        return np.stack([factor * x, factor * y], axis=-1)

    def f(x, y):
        return profile.source(_radius(x, y))

    return ManufacturedCase(
        name=CaseName.INDICATOR.value,
        gamma=gamma,
        regularity=0.5,
        bc_mode=BoundaryMode.NEUMANN,
        u=u,
        grad_u=grad_u,
        f=f,
        interface_radius=radius,
    )


def get_case(name: CaseName, gamma: float = DEFAULT_GAMMA) -> ManufacturedCase:
    """Build a case by name.

    Raises:
        ValueError: If the name is unknown.
    """
    builders = {
        CaseName.SMOOTH: smooth_case,
        CaseName.INDICATOR: indicator_case,
        CaseName.DIRICHLET_SMOKE: dirichlet_case,
    }
    try:
        return builders[CaseName(name)](gamma)
    except ValueError:
        raise ValueError(f"Invalid case: {name}") from None


def _shoot(gamma: float, u0: float, radius: float):
    """Integrate the radial ODE from near the origin; returns the two dense segments."""
    c2 = (gamma * u0 - 1.0) / 4.0
    c4 = gamma * c2 / 16.0
    r0 = _ODE_START
    start = [u0 + c2 * r0**2 + c4 * r0**4, 2 * c2 * r0 + 4 * c4 * r0**3]

    def rhs(source):
        def fn(r, y):
            return [y[1], gamma * y[0] - y[1] / r - source]

        return fn

    options = dict(method="DOP853", rtol=_ODE_RTOL, atol=_ODE_ATOL, dense_output=True)
    inner = solve_ivp(rhs(1.0), (r0, radius), start, **options)
    outer = solve_ivp(rhs(0.0), (radius, 1.0), inner.y[:, -1], **options)
    if not (inner.success and outer.success):
        raise RuntimeError(f"ODE integration failed: {inner.message} / {outer.message}")
    return inner, outer, (c2, c4)


def ode_reference(
    gamma: float, radii, radius: float = DEFAULT_INTERFACE_RADIUS
) -> Tuple[np.ndarray, np.ndarray]:
    """Independent reference for the indicator profile by ODE shooting.

    The solution is affine in the unknown centre value `u(0)`, so two trial
    integrations fix it through the Neumann condition `u'(1) = 0`.

    Args:
        gamma (float): Reaction coefficient.
        radii: Radii in [0, 1].
        radius (float): Interface radius.

    Returns:
        Tuple[np.ndarray, np.ndarray]: `u` and `u'` at the radii.
    """
    trial = [_shoot(gamma, u0, radius)[1].y[1, -1] for u0 in (0.0, 1.0)]
    u0 = -trial[0] / (trial[1] - trial[0])
    inner, outer, (c2, c4) = _shoot(gamma, u0, radius)
    _LOGGER.debug("ODE reference for gamma=%g: u(0)=%.15g", gamma, u0)

    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    values, slopes = np.empty_like(radii), np.empty_like(radii)
    for k, r in enumerate(radii):
        if r < _ODE_START:
            values[k] = u0 + c2 * r**2 + c4 * r**4
            slopes[k] = 2 * c2 * r + 4 * c4 * r**3
        else:
            values[k], slopes[k] = (inner if r <= radius else outer).sol(r)
    return values, slopes
