"""Test functions for the convergence study harness."""

import math

import numpy as np
import pandas as pd
import pytest
from fosls.fosls import SolverError, build_spaces
from fosls.mesh import mesh_hierarchy
from fosls.objects import Family, ProblemConfig, RateTriple, StudyConfig, parse_degrees
from fosls.study import (
    StudyConfigError,
    best_rates,
    estimate_dofs,
    main,
    predicted_rates,
    run_study,
    verdict,
)
from pydantic import ValidationError


def test_predicted_rates() -> None:
    """Guaranteed rates for smooth and rough data."""
    inf = float("inf")
    assert predicted_rates(inf, 3, 2, Family.RT) == RateTriple(u=4.0, gradu=3.0, phi=2.0)
    assert predicted_rates(inf, 2, 2, Family.BDM) == RateTriple(u=3.0, gradu=2.0, phi=3.0)
    assert predicted_rates(0.5, 4, 4, Family.BDM) == RateTriple(u=2.5, gradu=1.5, phi=1.5)
    assert predicted_rates(0.5, 3, 3, Family.RT) == RateTriple(u=2.5, gradu=1.5, phi=1.5)
    # lowest order fluxes cap the scalar rate at two
    assert predicted_rates(inf, 3, 1, Family.RT).u == 2.0
    assert predicted_rates(inf, 1, 3, Family.RT) == RateTriple(u=2.0, gradu=1.0, phi=2.0)


def test_best_rates() -> None:
    """Best-approximation rates follow the degrees alone."""
    inf = float("inf")
    assert best_rates(inf, 2, 1, Family.RT) == RateTriple(u=3.0, gradu=2.0, phi=1.0)
    assert best_rates(inf, 2, 1, Family.BDM) == RateTriple(u=3.0, gradu=2.0, phi=2.0)
    assert best_rates(0.5, 3, 3, Family.RT) == RateTriple(u=2.5, gradu=1.5, phi=1.5)


def test_verdict() -> None:
    """Observed rates may fall short by a quarter."""
    assert verdict(1.8, 2.0) == "PASS"
    assert verdict(1.75, 2.0) == "PASS"
    assert verdict(1.7, 2.0) == "FAIL"
    assert verdict(3.4, 2.0) == "PASS"
    assert verdict(float("nan"), 1.0) == "FAIL"


def test_parse_degrees() -> None:
    """Single values, ranges and lists."""
    assert parse_degrees("1-3") == [1, 2, 3]
    assert parse_degrees("3,1") == [1, 3]
    assert parse_degrees(" 2 ") == [2]
    assert parse_degrees("1-2,4") == [1, 2, 4]
    assert parse_degrees([2, 2, 1]) == [1, 2]
    with pytest.raises(ValueError, match="Invalid degree expression"):
        parse_degrees("a")
    with pytest.raises(ValueError, match="Invalid degree expression"):
        parse_degrees("3-1")


def test_study_config() -> None:
    """Degree ranges, pairings and level counts are validated."""
    config = StudyConfig(ps="1-2", pv=[1, 3])
    assert config.combinations == [(1, 1), (1, 3), (2, 1), (2, 3)]
    diagonal = StudyConfig(ps="1-3", pv="2-4", pairing="diagonal")
    assert diagonal.combinations == [(2, 2), (3, 3)]
    with pytest.raises(ValidationError):
        StudyConfig(ps=[0])
    with pytest.raises(ValidationError):
        StudyConfig(pv="7")
    with pytest.raises(ValidationError):
        StudyConfig(levels=1)
    with pytest.raises(ValidationError, match="common degree"):
        StudyConfig(ps=[1], pv=[2], pairing="diagonal")


@pytest.mark.parametrize(
    "case,family,fitted",
    [
        ("smooth", "RT", False),
        ("smooth", "BDM", False),
        ("indicator", "RT", True),
        ("indicator", "BDM", False),
        ("dirichlet-smoke", "RT", False),
    ],
)
def test_estimate_dofs(case: str, family: str, fitted: bool) -> None:
    """Counted DOFs agree with the spaces built on the finest mesh."""
    config = StudyConfig(case=case, family=family, levels=3, fitted_interface=fitted)
    radius = 0.5 if fitted else None
    mesh = mesh_hierarchy(config.n_fan, config.levels, radius)[-1]
    bc_mode = "dirichlet" if case == "dirichlet-smoke" else "neumann"
    for p_s, p_v in ((1, 1), (2, 3), (3, 2)):
        problem = ProblemConfig(family=family, p_s=p_s, p_v=p_v, bc_mode=bc_mode)
        vector_space, scalar_space = build_spaces(mesh, problem)
        actual = vector_space.dofs.n_free + scalar_space.dofs.n_free
        assert estimate_dofs(config, p_s, p_v) == actual


def test_study_size_guardrail(tmp_path) -> None:
    """Oversized studies stop before writing anything."""
    config = StudyConfig(ps=[3], pv=[3], levels=4, max_dofs=100, output=tmp_path / "out")
    with pytest.raises(StudyConfigError, match="Invalid study size"):
        run_study(config)
    assert not (tmp_path / "out").exists()
    code = main(["--ps", "4", "--pv", "4", "--levels", "9", "--out", str(tmp_path / "big")])
    assert code == 2
    assert not (tmp_path / "big").exists()


@pytest.mark.parametrize(
    "argv",
    [["--levels", "1"], ["--ps", "9"], ["--ps", "x"], ["--gamma", "-1"]],
)
def test_invalid_arguments(argv, tmp_path) -> None:
    """Invalid configurations exit with status 2."""
    assert main([*argv, "--out", str(tmp_path)]) == 2


def test_missing_config_file(tmp_path) -> None:
    """An unreadable manifest exits with status 2."""
    assert main(["--config", str(tmp_path / "missing.toml")]) == 2


def test_small_study(tmp_path) -> None:
    """A run writes its tables, charts and summary, reproducibly."""
    out = tmp_path / "run"
    argv = ["--case", "smooth", "--ps", "1", "--pv", "1", "--levels", "3", "--out", str(out)]
    code = main(argv)
    assert code in (0, 1)
    stem = "smooth_RT_ps1_pv1"
    for name in (f"{stem}.csv", f"{stem}_u.svg", f"{stem}_gradu.svg", f"{stem}_phi.svg"):
        assert (out / name).exists()
    table = pd.read_csv(out / f"{stem}.csv")
    assert table["level"].tolist() == [0, 1, 2]
    assert table["err_u"].iloc[-1] < table["err_u"].iloc[0]
    summary = pd.read_csv(out / "summary.csv")
    assert summary["norm"].tolist() == ["u", "gradu", "phi"]
    assert set(summary["verdict"]) <= {"PASS", "FAIL"}
    rates = pd.read_csv(out / "rates.csv")
    assert len(rates) == 3

    first = (out / f"{stem}.csv").read_text()
    assert main(argv) == code
    assert (out / f"{stem}.csv").read_text() == first


def test_config_file_with_overrides(tmp_path) -> None:
    """Command line flags override the manifest."""
    manifest = tmp_path / "study.toml"
    out = tmp_path / "from-config"
    manifest.write_text(
        "[study]\n"
        'case = "smooth"\n'
        'family = "BDM"\n'
        'ps = "1"\n'
        "pv = [1]\n"
        "levels = 2\n"
        f'output = "{out.as_posix()}"\n'
    )
    assert main(["--config", str(manifest), "--levels", "3", "--no-expected-rates"]) in (0, 1)
    table = pd.read_csv(out / "smooth_BDM_ps1_pv1.csv")
    assert len(table) == 3
    assert not (out / "rates.csv").exists()


def test_failed_combination_is_reported(tmp_path, monkeypatch) -> None:
    """A solver failure becomes an ERROR row and exit status 1."""

    def broken(system):
        raise SolverError("Linear solve failed", 0, math.inf)

    monkeypatch.setattr("fosls.study.solve", broken)
    out = tmp_path / "broken"
    assert main(["--ps", "1", "--pv", "1", "--levels", "2", "--out", str(out)]) == 1
    summary = pd.read_csv(out / "summary.csv")
    assert set(summary["verdict"]) == {"ERROR"}
    assert summary["observed"].isna().all()
    assert not (out / "smooth_RT_ps1_pv1.csv").exists()


def test_fitted_interface_run(tmp_path) -> None:
    """The indicator case also runs on meshes aligned with its jump."""
    out = tmp_path / "fitted"
    argv = ["--case", "indicator", "--fitted-interface", "--ps", "1", "--pv", "1"]
    assert main([*argv, "--levels", "2", "--out", str(out)]) in (0, 1)
    table = pd.read_csv(out / "indicator_RT_ps1_pv1.csv")
    assert np.all(table["err_u"] > 0)
