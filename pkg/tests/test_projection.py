"""Test functions for the divergence-constrained projection and the Helmholtz split."""

import numpy as np
import pytest
from fosls.cases import smooth_case
from fosls.fosls import l2_projection, vector_load, vector_matrices
from fosls.mesh import mesh_hierarchy
from fosls.metrics import field_errors
from fosls.objects import VectorSpaceSpec
from fosls.projection import (
    apply_ih,
    curl_matrix,
    helmholtz_split,
    potential_degree,
    potential_space,
)
from fosls.quadrature import triangle_rule
from fosls.spaces import FunctionSpace

SPECS = [("RT", 1), ("RT", 2), ("BDM", 1), ("BDM", 2)]


def _space(family: str, p_v: int, bc: str = "zero-normal-trace", level: int = 1):
    mesh = mesh_hierarchy(6, level + 1)[-1]
    return FunctionSpace(mesh, VectorSpaceSpec(family=family, p_v=p_v, bc=bc))


def _half_position(x, y):
    return np.stack([x / 2, y / 2], axis=-1)


def test_potential_degree() -> None:
    """RT potentials share the vector degree, BDM potentials go one higher."""
    assert potential_degree(VectorSpaceSpec(family="RT", p_v=1)) == 1
    assert potential_degree(VectorSpaceSpec(family="RT", p_v=3)) == 3
    assert potential_degree(VectorSpaceSpec(family="BDM", p_v=1)) == 2
    assert potential_degree(VectorSpaceSpec(family="BDM", p_v=5)) == 6


@pytest.mark.parametrize("family,p_v", SPECS)
def test_discrete_fields_are_fixed(family: str, p_v: int) -> None:
    """Projecting a discrete field returns it unchanged."""
    space = _space(family, p_v)
    rng = np.random.default_rng(3)
    field = rng.standard_normal(space.n_dofs)
    field[space.dofs.constrained] = 0.0
    projected = apply_ih(space, coefficients=field)
    assert np.max(np.abs(projected - field)) < 1e-9 * np.max(np.abs(field))


def test_divergence_of_affine_elements() -> None:
    """div I_h (x/2, y/2) is one on every straight element."""
    for family, p_v in (("RT", 1), ("BDM", 1), ("RT", 2)):
        space = _space(family, p_v, bc="none")
        coefficients = apply_ih(space, _half_position, lambda x, y: np.ones_like(x))
        affine = np.flatnonzero(~space.mesh.curved)
        assert len(affine) > 0
        _, divergence = space.evaluate(coefficients, triangle_rule(4).nodes, affine)
        assert np.max(np.abs(divergence - 1.0)) < 1e-9


@pytest.mark.parametrize("family,p_v", SPECS)
def test_divergence_orthogonality(family: str, p_v: int) -> None:
    """(div (phi - I_h phi), div chi) vanishes for every discrete chi."""
    case = smooth_case()
    space = _space(family, p_v)
    degree = 2 * (p_v + 3)
    coefficients = apply_ih(space, case.phi, case.div_phi, degree=degree)
    _, divdiv = vector_matrices(space, degree)
    target = vector_load(space, None, degree, divergence=case.div_phi)
    defect = (divdiv @ coefficients - target)[space.dofs.free]
    assert np.max(np.abs(defect)) < 1e-9 * max(1.0, np.max(np.abs(target)))


@pytest.mark.parametrize("family,p_v", SPECS)
def test_projection_against_l2_projection(family: str, p_v: int) -> None:
    """I_h has the better divergence and an L2 error bounded by a stable constant."""
    case = smooth_case()
    degree = 2 * (p_v + 3)
    ratios = []
    for level in (1, 2, 3):
        space = _space(family, p_v, level=level)
        projected = apply_ih(space, case.phi, case.div_phi, degree=degree)
        best = l2_projection(space, case.phi, degree)
        ih_value, ih_div = field_errors(space, projected, case.phi, case.div_phi, degree)
        l2_value, l2_div = field_errors(space, best, case.phi, case.div_phi, degree)
        assert ih_div <= l2_div * (1 + 1e-8)
        assert l2_value <= ih_value * (1 + 1e-8)
        ratios.append(ih_value / (l2_value + space.mesh.h * l2_div))
    assert max(ratios) < 10
    assert max(ratios) < 3 * min(ratios)


def test_invalid_projection_input() -> None:
    """A field without its divergence is rejected."""
    space = _space("RT", 1)
    with pytest.raises(ValueError, match="Invalid projection input"):
        apply_ih(space, _half_position)


@pytest.mark.parametrize("family,p_v", SPECS)
def test_curl_rank(family: str, p_v: int) -> None:
    """Curls of potentials are injective up to constants."""
    for bc in ("none", "zero-normal-trace"):
        space = _space(family, p_v, bc=bc, level=0)
        potential = potential_space(space)
        curl = curl_matrix(space, potential)[space.dofs.free][:, potential.dofs.free]
        expected = potential.dofs.n_free - (1 if bc == "none" else 0)
        assert np.linalg.matrix_rank(curl.toarray()) == expected


@pytest.mark.parametrize("family,p_v", SPECS)
def test_curls_are_divergence_free(family: str, p_v: int) -> None:
    """The divergence of every potential curl vanishes."""
    space = _space(family, p_v, bc="none")
    curl = curl_matrix(space).toarray()
    _, divdiv = vector_matrices(space, 2 * (p_v + 3))
    assert np.max(np.abs(divdiv @ curl)) < 1e-9 * max(1.0, abs(divdiv).max())


@pytest.mark.parametrize("family,p_v", SPECS)
def test_helmholtz_split_of_a_curl(family: str, p_v: int) -> None:
    """A discrete curl has no remainder."""
    space = _space(family, p_v, bc="none")
    potential = potential_space(space)
    mu = potential.interpolate(lambda x, y: -(x**2 + y**2) / 2)
    field = curl_matrix(space, potential) @ mu
    curl_part, remainder = helmholtz_split(space, field)
    assert np.max(np.abs(remainder)) < 1e-9 * np.max(np.abs(field))
    assert np.allclose(curl_part + remainder, field)


@pytest.mark.parametrize("bc", ["none", "zero-normal-trace"])
def test_helmholtz_split_orthogonal(bc: str) -> None:
    """The remainder is L2-orthogonal to every curl and divergence free parts agree."""
    space = _space("RT", 2, bc=bc)
    degree = 2 * (2 + 3)
    rng = np.random.default_rng(5)
    field = rng.standard_normal(space.n_dofs)
    field[space.dofs.constrained] = 0.0
    curl_part, remainder = helmholtz_split(space, field, degree)
    mass, divdiv = vector_matrices(space, degree)
    potential = potential_space(space)
    curl = curl_matrix(space, potential)[:, potential.dofs.free]
    assert np.max(np.abs(curl.T @ (mass @ remainder))) < 1e-9 * np.max(np.abs(field))
    assert np.max(np.abs(divdiv @ curl_part)) < 1e-8 * np.max(np.abs(field))
    assert np.allclose(divdiv @ remainder, divdiv @ field, atol=1e-8 * np.max(np.abs(field)))
