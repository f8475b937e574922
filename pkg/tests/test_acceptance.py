"""Test functions for full convergence studies; run with `pytest -m slow`."""

from typing import Dict

import pytest
from fosls.objects import StudyConfig
from fosls.study import run_combination

pytestmark = pytest.mark.slow

SLACK = 0.25


def _last_eocs(tmp_path, p_s: int, p_v: int, levels: int = 5, **settings) -> Dict[str, float]:
    config = StudyConfig(levels=levels, n_fan=6, output=tmp_path, ps=[p_s], pv=[p_v], **settings)
    result = run_combination(config, p_s, p_v)
    assert result.error is None
    return {norm: result.report.eocs[f"err_{norm}"][-1] for norm in ("u", "gradu", "phi")}


def _levels(p: int) -> int:
    # cubic rates need a sixth level to settle on the curved fan
    return 6 if p >= 3 else 5


@pytest.mark.parametrize("p", [1, 2, 3])
def test_smooth_raviart_thomas(tmp_path, p: int) -> None:
    """Smooth data with RT fluxes reach the guaranteed rates."""
    rates = _last_eocs(tmp_path, p, p, _levels(p), case="smooth", family="RT")
    assert rates["u"] >= max(p + 1, 2) - SLACK
    assert rates["gradu"] >= p - SLACK
    assert rates["phi"] >= p - SLACK


@pytest.mark.parametrize("p", [1, 2, 3])
def test_smooth_bdm_flux(tmp_path, p: int) -> None:
    """BDM fluxes gain one order over RT fluxes of the same degree."""
    rates = _last_eocs(tmp_path, p, p, _levels(p), case="smooth", family="BDM")
    assert rates["phi"] >= p + 1 - SLACK
    assert rates["gradu"] >= p - SLACK


def test_high_scalar_degree_is_capped(tmp_path) -> None:
    """With lowest order fluxes the scalar gradient stalls near order two."""
    rates = _last_eocs(tmp_path, 3, 1, case="smooth", family="RT", gamma=2.0)
    assert 2 - SLACK <= rates["gradu"] <= 2.3


def test_high_flux_degree_is_capped(tmp_path) -> None:
    """With linear scalars the scalar error stalls near order two."""
    rates = _last_eocs(tmp_path, 1, 3, case="smooth", family="RT", gamma=2.0)
    assert 2 - SLACK <= rates["u"] <= 2.3


@pytest.mark.parametrize("family", ["RT", "BDM"])
def test_indicator_rates(tmp_path, family: str) -> None:
    """A jumping right-hand side limits every rate to the regularity of the data."""
    rates = _last_eocs(tmp_path, 3, 3, case="indicator", family=family)
    assert 2.5 - SLACK <= rates["u"] <= 2.9
    assert 1.5 - SLACK <= rates["gradu"] <= 1.9
    assert 1.5 - SLACK <= rates["phi"] <= 1.9


def test_indicator_on_fitted_meshes(tmp_path) -> None:
    """Meshes aligned with the jump restore the smooth-data rates."""
    rates = _last_eocs(tmp_path, 2, 2, case="indicator", family="RT", fitted_interface=True)
    assert rates["u"] >= 3 - SLACK
    assert rates["gradu"] >= 2 - SLACK
    assert rates["phi"] >= 2 - SLACK
