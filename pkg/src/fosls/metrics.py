"""Error norms against manufactured solutions and convergence orders."""

import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .fosls import SolutionPair
from .mesh import split_points
from .objects import ConvergenceReport, ErrorReport, ManufacturedCase, ProblemConfig
from .quadrature import triangle_rule
from .resources import CSV_HEADER
from .spaces import FunctionSpace

_LOGGER = logging.getLogger(__name__)

EOC_FIELDS = ["err_u", "err_gradu", "err_phi", "err_divphi", "err_b"]
"""ErrorReport fields that carry an EOC sequence."""


def _error_sums(sol, exact, gamma, xhat, elements, geometry, wdet) -> Dict[str, float]:
    x, y = geometry[0][..., 0], geometry[0][..., 1]
    u_h, grad_h = sol.scalar_space.evaluate(sol.u, xhat, elements, geometry)
    phi_h, div_h = sol.vector_space.evaluate(sol.phi, xhat, elements, geometry)
    e_u = exact.u(x, y) - u_h
    e_grad = exact.grad_u(x, y) - grad_h
    e_phi = exact.phi(x, y) - phi_h
    e_div = exact.div_phi(x, y) - div_h
    return {
        "u": np.sum(wdet * e_u**2),
        "gradu": np.sum(wdet * np.sum(e_grad**2, axis=-1)),
        "phi": np.sum(wdet * np.sum(e_phi**2, axis=-1)),
        "divphi": np.sum(wdet * e_div**2),
        "b_div": np.sum(wdet * (e_div + gamma * e_u) ** 2),
        "b_grad": np.sum(wdet * np.sum((e_grad + e_phi) ** 2, axis=-1)),
    }


def compute_errors(
    sol: SolutionPair, exact: ManufacturedCase, config: Optional[ProblemConfig] = None
) -> ErrorReport:
    """Integrate the errors of a discrete solution.

    Elements cut by the interface of `exact`, if it has one, are integrated
    with the split rule of the mesh.

    Args:
        sol (SolutionPair): Discrete solution.
        exact (ManufacturedCase): Exact solution.
        config (ProblemConfig, optional): Source of gamma and the error
            quadrature degree; defaults to the configuration of `sol`.

    Returns:
        ErrorReport: L2 norms of `e_u`, `grad e_u`, `e_phi`, `div e_phi` and
        the b-norm error with its two components.
    """
    config = config or sol.config
    gamma, degree = config.gamma, config.error_quadrature_degree
    rule = triangle_rule(degree)
    mesh = sol.mesh
    radius = exact.interface_radius
    cut = mesh.cut_elements(radius) if radius else np.empty(0, int)
    totals = dict.fromkeys(["u", "gradu", "phi", "divphi", "b_div", "b_grad"], 0.0)

    def accumulate(sums):
        for key, value in sums.items():
            totals[key] += float(value)

    for elements in mesh.chunks():
        geometry = mesh.geometry(rule.nodes, elements)
        wdet = geometry[2] * rule.weights
        wdet[np.isin(elements, cut)] = 0.0
        accumulate(_error_sums(sol, exact, gamma, rule.nodes, elements, geometry, wdet))
    for k in cut:
        xhat, weights = mesh.split_rule(k, radius, split_points(degree))
        elements = np.array([k])
        geometry = mesh.geometry(xhat, elements)
        accumulate(_error_sums(sol, exact, gamma, xhat, elements, geometry, weights[None]))

    norms = {key: float(np.sqrt(max(value, 0.0))) for key, value in totals.items()}
    dof_u, dof_phi = sol.scalar_space.dofs.n_free, sol.vector_space.dofs.n_free
    report = ErrorReport(
        level=mesh.level,
        h=mesh.h,
        dof_total=dof_u + dof_phi,
        dof_u=dof_u,
        dof_phi=dof_phi,
        err_u=norms["u"],
        err_gradu=norms["gradu"],
        err_phi=norms["phi"],
        err_divphi=norms["divphi"],
        err_b=float(np.hypot(norms["b_div"], norms["b_grad"])),
        err_b_div=norms["b_div"],
        err_b_grad=norms["b_grad"],
    )
    _LOGGER.debug("Errors on level %d: %s", mesh.level, report)
    return report


def field_errors(
    space: FunctionSpace,
    coefficients: np.ndarray,
    field: Callable,
    derivative: Optional[Callable],
    degree: int,
) -> Tuple[float, float]:
    """L2 errors of a discrete field and of its gradient or divergence.

    Args:
        space (FunctionSpace): Space of the discrete field.
        coefficients (np.ndarray): Global coefficients.
        field: Exact `field(x, y)`.
        derivative: Exact gradient (scalar space) or divergence (vector
            space); `None` skips the second norm.
        degree (int): Quadrature degree.

    Returns:
        Tuple[float, float]: Field error and derivative error (0 if skipped).
    """
    rule = triangle_rule(degree)
    value_sq, deriv_sq = 0.0, 0.0
    for elements in space.mesh.chunks():
        geometry = space.mesh.geometry(rule.nodes, elements)
        x, y = geometry[0][..., 0], geometry[0][..., 1]
        wdet = geometry[2] * rule.weights
        values, deriv = space.evaluate(coefficients, rule.nodes, elements, geometry)
        diff = np.asarray(field(x, y)) - values
        value_sq += np.sum(wdet * diff**2 if diff.ndim == 2 else wdet * np.sum(diff**2, -1))
        if derivative is not None:
            ddiff = np.asarray(derivative(x, y)) - deriv
            deriv_sq += np.sum(
                wdet * ddiff**2 if ddiff.ndim == 2 else wdet * np.sum(ddiff**2, -1)
            )
    return float(np.sqrt(value_sq)), float(np.sqrt(deriv_sq))


def eoc(errors: Sequence[float], h_values: Sequence[float]) -> List[float]:
    """Estimated orders of convergence between consecutive levels.

    ```python
    >>> eoc([0.1, 0.025], [1.0, 0.5])
    [2.0]
    ```

    Args:
        errors: Positive errors per level.
        h_values: Strictly decreasing positive mesh sizes per level.

    Returns:
        List[float]: `log(e_k / e_k+1) / log(h_k / h_k+1)` for each interval.

    Raises:
        ValueError: If the inputs are too short, of unequal length,
            nonpositive or not strictly decreasing in h.
    """
    errors = np.asarray(errors, dtype=float)
    h_values = np.asarray(h_values, dtype=float)
    if errors.shape != h_values.shape or errors.ndim != 1 or len(errors) < 2:
        raise ValueError(f"Invalid EOC input lengths: {errors.shape} and {h_values.shape}")
    if np.any(errors <= 0) or np.any(h_values <= 0):
        raise ValueError(f"Invalid EOC input, entries must be positive: {errors.tolist()}")
    if np.any(np.diff(h_values) >= 0):
        raise ValueError(f"Invalid mesh sizes, not strictly decreasing: {h_values.tolist()}")
    return (np.log(errors[:-1] / errors[1:]) / np.log(h_values[:-1] / h_values[1:])).tolist()


def convergence_report(reports: Sequence[ErrorReport]) -> ConvergenceReport:
    """Attach EOC sequences to a list of per-level error reports.

    Intervals with a vanishing error get a NaN order.
    """
    reports = list(reports)
    h = [r.h for r in reports]
    eocs: Dict[str, List[float]] = {}
    for name in EOC_FIELDS:
        values = [getattr(r, name) for r in reports]
        if len(reports) < 2:
            eocs[name] = []
        elif min(values) > 0:
            eocs[name] = eoc(values, h)
        else:
            eocs[name] = [
                eoc(values[k : k + 2], h[k : k + 2])[0]
                if min(values[k : k + 2]) > 0
                else float("nan")
                for k in range(len(values) - 1)
            ]
    return ConvergenceReport(reports=reports, eocs=eocs)


def report_frame(report: ConvergenceReport) -> pd.DataFrame:
    """Tabulate a convergence report in the CSV column order."""
    rows = []
    for k, level in enumerate(report.reports):
        row = level.model_dump(include=set(CSV_HEADER[:10]))
        for norm in ("u", "gradu", "phi"):
            row[f"eoc_{norm}"] = report.eocs[f"err_{norm}"][k - 1] if k else np.nan
        rows.append(row)
    return pd.DataFrame(rows, columns=CSV_HEADER)


def write_csv(report: ConvergenceReport, path: Union[str, Path]) -> Path:
    """Write one CSV row per level; EOC columns are blank on the first row."""
    path = Path(path)
    report_frame(report).to_csv(path, index=False, na_rep="")
    return path
