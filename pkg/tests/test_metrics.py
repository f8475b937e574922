"""Test functions for error norms and convergence orders."""

import math

import numpy as np
import pandas as pd
import pytest
from fosls.cases import indicator_case, smooth_case
from fosls.fosls import SolutionPair, build_spaces
from fosls.mesh import mesh_hierarchy
from fosls.metrics import (
    compute_errors,
    convergence_report,
    eoc,
    field_errors,
    report_frame,
    write_csv,
)
from fosls.objects import ErrorReport, ProblemConfig
from fosls.resources import CSV_HEADER


def _zero_pair(mesh, config: ProblemConfig) -> SolutionPair:
    vector_space, scalar_space = build_spaces(mesh, config)
    return SolutionPair(
        phi=np.zeros(vector_space.n_dofs),
        u=np.zeros(scalar_space.n_dofs),
        vector_space=vector_space,
        scalar_space=scalar_space,
        config=config,
    )


def _report(level: int, h: float, err: float) -> ErrorReport:
    return ErrorReport(
        level=level,
        h=h,
        dof_total=10 * (level + 1),
        dof_u=4 * (level + 1),
        dof_phi=6 * (level + 1),
        err_u=err,
        err_gradu=2 * err,
        err_phi=3 * err,
        err_divphi=err,
        err_b=err,
        err_b_div=err,
        err_b_grad=0.0,
    )


def test_eoc_examples() -> None:
    """Orders of ideal error sequences."""
    assert eoc([0.1, 0.025], [1.0, 0.5]) == pytest.approx([2.0])
    assert eoc([1.0, 0.5, 0.25], [0.4, 0.2, 0.1]) == pytest.approx([1.0, 1.0])
    assert eoc([8.0, 1.0], [1.0, 0.5]) == pytest.approx([3.0])


def test_eoc_invalid() -> None:
    """Short, mismatched, nonpositive or non-decreasing inputs are rejected."""
    with pytest.raises(ValueError, match="lengths"):
        eoc([0.1], [1.0])
    with pytest.raises(ValueError, match="lengths"):
        eoc([0.1, 0.2, 0.3], [1.0, 0.5])
    with pytest.raises(ValueError, match="positive"):
        eoc([0.1, 0.0], [1.0, 0.5])
    with pytest.raises(ValueError, match="not strictly decreasing"):
        eoc([0.1, 0.05], [0.5, 0.5])


def test_error_of_zero_solution() -> None:
    """||u|| of cos(2 pi r^2) over the disk is sqrt(pi / 2)."""
    mesh = mesh_hierarchy(6, 4)[-1]
    config = ProblemConfig(p_s=2, p_v=2)
    report = compute_errors(_zero_pair(mesh, config), smooth_case())
    assert report.err_u == pytest.approx(math.sqrt(math.pi / 2), rel=1e-6)
    assert report.level == 3
    assert report.h == mesh.h
    assert report.dof_total == report.dof_u + report.dof_phi


def test_energy_error_components() -> None:
    """err_b combines its two parts, and the flux part cancels for a zero pair."""
    mesh = mesh_hierarchy(6, 3)[-1]
    case = smooth_case()
    report = compute_errors(_zero_pair(mesh, ProblemConfig()), case)
    assert report.err_b == pytest.approx(math.hypot(report.err_b_div, report.err_b_grad))
    # e_phi = phi = -grad u = -e_grad
    assert report.err_b_grad < 1e-12
    assert report.err_gradu == pytest.approx(report.err_phi, rel=1e-12)


def test_error_quadrature_is_resolved() -> None:
    """Raising the error quadrature degree leaves the norms unchanged."""
    mesh = mesh_hierarchy(6, 3)[-1]
    pair = _zero_pair(mesh, ProblemConfig())
    low = compute_errors(pair, smooth_case(), ProblemConfig(error_degree=16))
    high = compute_errors(pair, smooth_case(), ProblemConfig(error_degree=20))
    assert low.err_u == pytest.approx(high.err_u, rel=1e-6)
    assert low.err_gradu == pytest.approx(high.err_gradu, rel=1e-6)


def test_interface_errors_use_split_rule() -> None:
    """The indicator error of a zero pair sees the exact jump of f."""
    mesh = mesh_hierarchy(6, 2)[-1]
    case = indicator_case()
    report = compute_errors(_zero_pair(mesh, ProblemConfig()), case)
    # with u_h = 0 and phi_h = 0 the b-norm error is ||f||^2 = pi / 4 in its first part
    assert report.err_b_div == pytest.approx(math.sqrt(math.pi / 4), rel=1e-9)


def test_field_errors_of_interpolant() -> None:
    """Constants are reproduced by the scalar interpolant."""
    mesh = mesh_hierarchy(6, 2)[-1]
    _, scalar_space = build_spaces(mesh, ProblemConfig(p_s=3))
    coefficients = scalar_space.interpolate(lambda x, y: 2.5 * np.ones_like(x))
    value, gradient = field_errors(
        scalar_space,
        coefficients,
        lambda x, y: 2.5 * np.ones_like(x),
        lambda x, y: np.zeros(x.shape + (2,)),
        12,
    )
    assert value < 1e-10
    assert gradient < 1e-10


def test_convergence_report() -> None:
    """Every rated field gets one order per interval."""
    reports = [_report(k, 0.5**k, 0.25**k) for k in range(4)]
    result = convergence_report(reports)
    assert result.eocs["err_u"] == pytest.approx([2.0, 2.0, 2.0])
    assert result.eocs["err_phi"] == pytest.approx([2.0, 2.0, 2.0])
    assert len(result.reports) == 4


def test_convergence_report_zero_errors() -> None:
    """Intervals touching a vanishing error get NaN."""
    reports = [_report(0, 1.0, 0.1), _report(1, 0.5, 0.0), _report(2, 0.25, 0.0)]
    result = convergence_report(reports)
    assert all(math.isnan(value) for value in result.eocs["err_u"])
    single = convergence_report(reports[:1])
    assert single.eocs["err_u"] == []


def test_report_frame_and_csv(tmp_path) -> None:
    """The CSV has the fixed header and a blank first EOC row."""
    report = convergence_report([_report(k, 0.5**k, 0.5**k) for k in range(3)])
    frame = report_frame(report)
    assert list(frame.columns) == CSV_HEADER
    assert np.isnan(frame.loc[0, "eoc_u"])
    assert frame.loc[2, "eoc_gradu"] == pytest.approx(1.0)

    path = write_csv(report, tmp_path / "table.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert lines[1].endswith(",,,")
    assert len(lines) == 4
    loaded = pd.read_csv(path)
    assert loaded["level"].tolist() == [0, 1, 2]
    assert loaded["eoc_phi"].iloc[1] == pytest.approx(1.0)
