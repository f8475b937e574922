"""Divergence-constrained projection and the discrete Helmholtz split.

`apply_ih` computes the L2-closest discrete field whose divergence matches the
target in the discrete divergence space:

    minimize ||phi - phi_h||  subject to  (div (phi - phi_h), div chi_h) = 0.

The multiplier is a discrete vector field and is only determined up to the
divergence-free subspace, which in 2D is exactly the range of the curl of a
Lagrange space. That gauge is fixed by the block `-C C^T`:

    [ M   D      ] [phi_h]   [(phi, psi)        ]
    [ D  -C C^T  ] [lam  ] = [(div phi, div psi)]

with `M` the mass matrix, `D` the div-div matrix and `C` the curl matrix. The
system is nonsingular and its `phi_h` block solves the constrained problem.
"""

import logging
from functools import lru_cache
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .fosls import SolverError, constrained_solve, vector_load, vector_matrices
from .objects import Family, ScalarBC, ScalarSpaceSpec, VectorBC, VectorSpaceSpec
from .spaces import FunctionSpace, eval_scalar_basis, functional_points, vector_functionals

_LOGGER = logging.getLogger(__name__)


def potential_degree(spec: VectorSpaceSpec) -> int:
    """Lagrange degree whose curls fill the divergence-free part of the space.

    ```python
    >>> potential_degree(VectorSpaceSpec(family="RT", p_v=2))
    2
    >>> potential_degree(VectorSpaceSpec(family="BDM", p_v=2))
    3
    ```
    """
    return spec.p_v if spec.family is Family.RT else spec.p_v + 1


def potential_space(vector_space: FunctionSpace) -> FunctionSpace:
    """Lagrange space of curl potentials, zero trace if the fluxes have zero normal trace."""
    spec = vector_space.spec
    bc = ScalarBC.ZERO_TRACE if spec.bc is VectorBC.ZERO_NORMAL_TRACE else ScalarBC.NONE
    return FunctionSpace(vector_space.mesh, ScalarSpaceSpec(p_s=potential_degree(spec), bc=bc))


@lru_cache(maxsize=None)
def _local_curl(spec: VectorSpaceSpec, degree: int) -> np.ndarray:
    """DOF functionals of the reference curls (dy mu, -dx mu) of the Lagrange basis."""
    grads = eval_scalar_basis(ScalarSpaceSpec(p_s=degree), functional_points(spec)).gradients
    curls = np.stack([grads[..., 1], -grads[..., 0]], axis=-1)
    return vector_functionals(spec, curls.transpose(1, 0, 2)).T


def curl_matrix(
    vector_space: FunctionSpace, potential: Optional[FunctionSpace] = None
) -> sparse.csr_matrix:
    """Coefficients of the curls of the potential basis in the vector basis.

    On each element the curl of a mapped potential is the Piola transform of
    the reference curl, so the local matrix is the same on every element up
    to orientation signs.

    Args:
        vector_space (FunctionSpace): RT or BDM space.
        potential (FunctionSpace, optional): Lagrange space of degree
            `potential_degree`; built by `potential_space` if omitted.

    Returns:
        sparse.csr_matrix: Shape `(vector DOFs, potential DOFs)`, all DOFs.
    """
    potential = potential or potential_space(vector_space)
    spec = vector_space.spec
    local = _local_curl(VectorSpaceSpec(family=spec.family, p_v=spec.p_v), potential.spec.p_s)
    v_cells, s_cells = vector_space.dofs.cells, potential.dofs.cells
    rows = np.broadcast_to(v_cells[:, :, None], v_cells.shape + s_cells.shape[1:])
    cols = np.broadcast_to(s_cells[:, None, :], rows.shape)
    values = vector_space.dofs.signs[:, :, None] * local[None]
    # shared entries agree across elements, keep one copy
    keys = rows.ravel() * potential.n_dofs + cols.ravel()
    _, first = np.unique(keys, return_index=True)
    return sparse.csr_matrix(
        (values.ravel()[first], (rows.ravel()[first], cols.ravel()[first])),
        shape=(vector_space.n_dofs, potential.n_dofs),
    )


def _default_degree(vector_space: FunctionSpace) -> int:
    return 2 * (vector_space.spec.p_v + 3)


def apply_ih(
    vector_space: FunctionSpace,
    phi: Optional[Callable] = None,
    div_phi: Optional[Callable] = None,
    coefficients: Optional[np.ndarray] = None,
    degree: Optional[int] = None,
    interface_radius: Optional[float] = None,
) -> np.ndarray:
    """Divergence-constrained L2 projection onto a vector space.

    The boundary condition of `vector_space` selects the variant: with zero
    normal trace the projection maps into the constrained space.

    Args:
        vector_space (FunctionSpace): Target RT or BDM space.
        phi: Field `phi(x, y)` returning `(..., 2)` values.
        div_phi: Its divergence `div_phi(x, y)`.
        coefficients (np.ndarray, optional): A discrete field to project
            instead of `phi`, `div_phi`.
        degree (int, optional): Quadrature degree, `2 (p_v + 3)` by default.
        interface_radius (float, optional): Circle across which `div_phi`
            jumps.

    Returns:
        np.ndarray: Global coefficients, constrained DOFs zero.

    Raises:
        ValueError: If neither a field pair nor coefficients are given.
        SolverError: If the saddle point system is singular.
    """
    degree = degree or _default_degree(vector_space)
    mass, divdiv = vector_matrices(vector_space, degree)
    if coefficients is not None:
        target = np.asarray(coefficients, dtype=float)
        g, h = mass @ target, divdiv @ target
    elif phi is not None and div_phi is not None:
        g = vector_load(vector_space, phi, degree, interface_radius=interface_radius)
        h = vector_load(
            vector_space, None, degree, divergence=div_phi, interface_radius=interface_radius
        )
    else:
        raise ValueError("Invalid projection input: give phi and div_phi, or coefficients")

    potential = potential_space(vector_space)
    free = vector_space.dofs.free
    curl = curl_matrix(vector_space, potential)[free][:, potential.dofs.free]
    m, d = mass[free][:, free], divdiv[free][:, free]
    saddle = sparse.bmat([[m, d], [d, -(curl @ curl.T)]], format="csc")
    rhs = np.concatenate([g[free], h[free]])
    try:
        solution = splinalg.splu(saddle).solve(rhs)
    except RuntimeError as err:
        raise SolverError(f"Singular projection system: {err}") from err
    residual = np.linalg.norm(saddle @ solution - rhs) / max(np.linalg.norm(rhs), 1e-300)
    _LOGGER.debug("Projection system of size %d, residual %.2e", len(rhs), residual)

    result = np.zeros(vector_space.n_dofs)
    result[free] = solution[: len(free)]
    return result


def helmholtz_split(
    vector_space: FunctionSpace, coefficients: np.ndarray, degree: Optional[int] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """Split a discrete field into a curl part and an L2-orthogonal remainder.

    The curl part is the L2 projection onto `{curl mu_h}`; without a boundary
    condition one potential DOF is pinned to remove the constants.

    Args:
        vector_space (FunctionSpace): RT or BDM space of the field.
        coefficients (np.ndarray): Global coefficients of the field.
        degree (int, optional): Quadrature degree of the mass matrix.

    Returns:
        Tuple[np.ndarray, np.ndarray]: Coefficients of the curl part and of
        the remainder; they sum to the input.
    """
    degree = degree or _default_degree(vector_space)
    mass, _ = vector_matrices(vector_space, degree)
    potential = potential_space(vector_space)
    curl = curl_matrix(vector_space, potential)

    fixed = potential.dofs.constrained.copy()
    if not fixed.any():
        fixed[0] = True
    normal = (curl.T @ mass @ curl).tocsc()
    rhs = curl.T @ (mass @ np.asarray(coefficients, dtype=float))
    try:
        mu = constrained_solve(normal, rhs, fixed)
    except RuntimeError as err:
        raise SolverError(f"Singular curl projection: {err}") from err
    curl_part = curl @ mu
    return curl_part, np.asarray(coefficients, dtype=float) - curl_part
