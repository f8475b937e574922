"""Assemble and solve the least squares system of -Laplace(u) + gamma u = f.

With the flux `phi = -grad u` the model problem becomes the first order system
`div phi + gamma u = f`, `grad u + phi = 0`. The discrete pair minimizes

    b((phi, u), (phi, u)) - 2 F(phi, u),
    b((phi, u), (psi, v)) = (div phi + gamma u, div psi + gamma v) + (grad u + phi, grad v + psi),
    F(psi, v) = (f, div psi + gamma v),

over RT or BDM fluxes times Lagrange scalars. Unknowns are ordered vector
block first, scalar block second; boundary conditions are imposed by dropping
the constrained rows and columns.
"""

import logging
from pathlib import Path
from typing import Callable, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .mesh import Mesh, split_points
from .objects import ProblemConfig
from .quadrature import triangle_rule
from .resources import SOLVE_RESIDUAL_TOLERANCE
from .spaces import FunctionSpace

_LOGGER = logging.getLogger(__name__)

ScalarField = Callable[[np.ndarray, np.ndarray], np.ndarray]


class SolverError(RuntimeError):
    """A linear solve did not reach the requested residual."""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class FoslsSystem(BaseModel):
    """Assembled least squares system."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    config: ProblemConfig
    vector_space: FunctionSpace
    scalar_space: FunctionSpace
    full_matrix: sparse.csr_matrix = Field(description="Matrix over all DOFs.")
    full_load: np.ndarray = Field(description="Load vector over all DOFs.")
    free: np.ndarray = Field(description="Indices of the unconstrained unknowns.")

    @property
    def n_vector(self) -> int:
        """Size of the vector block."""
        return self.vector_space.n_dofs

    @property
    def n_total(self) -> int:
        """Number of unknowns, constrained ones included."""
        return self.vector_space.n_dofs + self.scalar_space.n_dofs

    @property
    def matrix(self) -> sparse.csr_matrix:
        """Matrix restricted to the free unknowns."""
        return self.full_matrix[self.free][:, self.free].tocsr()

    @property
    def load(self) -> np.ndarray:
        """Load vector restricted to the free unknowns."""
        return self.full_load[self.free]


class SolverReport(BaseModel):
    """Outcome of a linear solve."""

    model_config = ConfigDict(frozen=True)

    method: str = Field(description="`direct`, `cg`, or `cg+direct` after a CG fallback.")
    iterations: int = Field(ge=0)
    residual: float = Field(ge=0, description="Relative residual ||Ax - b|| / ||b||.")


class SolutionPair(BaseModel):
    """Discrete flux and scalar with the spaces they live in."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    phi: np.ndarray
    u: np.ndarray
    vector_space: FunctionSpace
    scalar_space: FunctionSpace
    config: ProblemConfig
    report: Optional[SolverReport] = None

    @property
    def mesh(self) -> Mesh:
        """Mesh of both spaces."""
        return self.scalar_space.mesh

    @property
    def coefficients(self) -> np.ndarray:
        """Coupled coefficient vector, vector block first."""
        return np.concatenate([self.phi, self.u])


def build_spaces(mesh: Mesh, config: ProblemConfig) -> Tuple[FunctionSpace, FunctionSpace]:
    """Vector and scalar spaces of a configuration."""
    return FunctionSpace(mesh, config.vector_spec), FunctionSpace(mesh, config.scalar_spec)


# generic assembly ---------------------------------------------------------------


def _gram(a: np.ndarray, wdet: np.ndarray, b: Optional[np.ndarray] = None) -> np.ndarray:
    """Element blocks of sum_q w_q a_i(q) . b_j(q); vector tables end in `(L, 2)`."""
    b = a if b is None else b
    if a.ndim == 4:
        n, m, _, _ = a.shape
        a = a.transpose(0, 1, 3, 2).reshape(n, 2 * m, -1)
        b = b.transpose(0, 1, 3, 2).reshape(n, 2 * m, -1)
        wdet = np.repeat(wdet, 2, axis=1)
    return np.matmul(a.transpose(0, 2, 1) * wdet[:, None, :], b)


def _sparse_assembly(mesh: Mesh, degree: int, size: int, local) -> sparse.csr_matrix:
    """Sum element blocks `local(xhat, elements, geometry, wdet) -> (blocks, cells)`."""
    rule = triangle_rule(degree)
    rows, cols, data = [], [], []
    for elements in mesh.chunks():
        geometry = mesh.geometry(rule.nodes, elements)
        wdet = geometry[2] * rule.weights
        blocks, cells = local(rule.nodes, elements, geometry, wdet)
        width = cells.shape[1]
        rows.append(np.repeat(cells, width, axis=1).ravel())
        cols.append(np.tile(cells, (1, width)).ravel())
        data.append(blocks.ravel())
    return sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    ).tocsr()


def _load_assembly(
    mesh: Mesh, degree: int, size: int, local, interface_radius: Optional[float] = None
) -> np.ndarray:
    """Sum element vectors `local(xhat, elements, geometry, wdet) -> (values, cells)`.

    Elements cut by the circle of `interface_radius` are integrated with the
    split rule so that right-hand sides jumping across it stay exact.
    """
    rule = triangle_rule(degree)
    cut = mesh.cut_elements(interface_radius) if interface_radius else np.empty(0, int)
    load = np.zeros(size)
    for elements in mesh.chunks():
        geometry = mesh.geometry(rule.nodes, elements)
        wdet = geometry[2] * rule.weights
        wdet[np.isin(elements, cut)] = 0.0
        values, cells = local(rule.nodes, elements, geometry, wdet)
        load += np.bincount(cells.ravel(), weights=values.ravel(), minlength=size)
    for k in cut:
        xhat, weights = mesh.split_rule(k, interface_radius, split_points(degree))
        elements = np.array([k])
        values, cells = local(xhat, elements, mesh.geometry(xhat, elements), weights[None])
        load += np.bincount(cells.ravel(), weights=values.ravel(), minlength=size)
    if len(cut):
        _LOGGER.debug("Split quadrature on %d elements cut at r=%g", len(cut), interface_radius)
    return load


def _check_mesh(mesh: Mesh, *spaces: FunctionSpace):
    for space in spaces:
        if space.mesh is not mesh:
            raise ValueError(f"Invalid space: {space!r} is defined on another mesh")


# the least squares system -------------------------------------------------------


def _residual_tables(vector_space, scalar_space, gamma, xhat, elements, geometry):
    vt = vector_space.tabulate(xhat, elements, geometry)
    st = scalar_space.tabulate(xhat, elements, geometry)
    first = np.concatenate([vt.divergence, gamma * st.values], axis=2)
    second = np.concatenate([vt.values, st.gradients], axis=2)
    cells = np.hstack(
        [vector_space.dofs.cells[elements], vector_space.n_dofs + scalar_space.dofs.cells[elements]]
    )
    return first, second, cells


def assemble(
    mesh: Mesh,
    config: ProblemConfig,
    f: ScalarField,
    spaces: Optional[Tuple[FunctionSpace, FunctionSpace]] = None,
    interface_radius: Optional[float] = None,
) -> FoslsSystem:
    """Assemble the least squares matrix and load vector.

    ```python
    >>> mesh = build_coarse_disk_mesh(6)
    >>> system = assemble(mesh, ProblemConfig(p_s=1, p_v=1), lambda x, y: np.ones_like(x))
    >>> system.matrix.shape
    (13, 13)
    ```

    Args:
        mesh (Mesh): Mesh.
        config (ProblemConfig): Degrees, boundary condition and gamma.
        f: Right-hand side `f(x, y)`.
        spaces: Optional prebuilt (vector, scalar) spaces on `mesh`.
        interface_radius (float, optional): Radius of a circle across which
            `f` jumps; elements it cuts get a split load quadrature.

    Returns:
        FoslsSystem: Full and free-restricted system.

    Raises:
        ValueError: If a given space lives on a different mesh.
    """
    vector_space, scalar_space = spaces if spaces is not None else build_spaces(mesh, config)
    _check_mesh(mesh, vector_space, scalar_space)
    gamma, degree = config.gamma, config.quadrature_degree
    size = vector_space.n_dofs + scalar_space.n_dofs
    _LOGGER.debug("Assembling with quadrature degree %d on %r", degree, mesh)

    def local_matrix(xhat, elements, geometry, wdet):
        first, second, cells = _residual_tables(
            vector_space, scalar_space, gamma, xhat, elements, geometry
        )
        return _gram(first, wdet) + _gram(second, wdet), cells

    def local_load(xhat, elements, geometry, wdet):
        first, _, cells = _residual_tables(
            vector_space, scalar_space, gamma, xhat, elements, geometry
        )
        points = geometry[0]
        values = f(points[..., 0], points[..., 1]) * wdet
        return np.einsum("nqi,nq->ni", first, values), cells

    matrix = _sparse_assembly(mesh, degree, size, local_matrix)
    load = _load_assembly(mesh, degree, size, local_load, interface_radius)
    free = np.concatenate(
        [vector_space.dofs.free, vector_space.n_dofs + scalar_space.dofs.free]
    )
    _LOGGER.info(
        "Assembled %d x %d system (%d free, %d nonzeros)",
        size,
        size,
        len(free),
        matrix.nnz,
    )
    return FoslsSystem(
        config=config,
        vector_space=vector_space,
        scalar_space=scalar_space,
        full_matrix=matrix,
        full_load=load,
        free=free,
    )


def solve(system: FoslsSystem) -> SolutionPair:
    """Solve the free part of an assembled system.

    Small systems use a sparse LU factorization, larger ones conjugate
    gradients with a Jacobi preconditioner. When CG stops before its
    tolerance and `cg_fallback` is set, the system is factorized instead and
    the report method reads `cg+direct`.

    Args:
        system (FoslsSystem): Assembled system.

    Returns:
        SolutionPair: Discrete flux and scalar, constrained DOFs set to zero.

    Raises:
        SolverError: If the relative residual exceeds 1e-10, or CG fails
            without a fallback.
    """
    config = system.config
    matrix, load = system.matrix, system.load
    load_norm = np.linalg.norm(load)
    iterations = 0
    if len(system.free) <= config.direct_solver_limit:
        method = "direct"
        x = splinalg.splu(matrix.tocsc()).solve(load) if len(load) else load.copy()
    else:
        method = "cg"
        counter = {"n": 0}

        def count(_):
            counter["n"] += 1

        jacobi = sparse.diags(1.0 / matrix.diagonal())
        x, info = splinalg.cg(
            matrix,
            load,
            rtol=config.cg_tolerance,
            maxiter=config.cg_max_iterations,
            M=jacobi,
            callback=count,
        )
        iterations = counter["n"]
        if info != 0:
            residual = np.linalg.norm(matrix @ x - load) / max(load_norm, np.finfo(float).tiny)
            if not config.cg_fallback:
                raise SolverError("Conjugate gradients did not converge", iterations, residual)
            _LOGGER.warning(
                "Conjugate gradients stopped after %d iterations at residual %.2e, "
                "falling back to a direct solve",
                iterations,
                residual,
            )
            method = "cg+direct"
            x = splinalg.splu(matrix.tocsc()).solve(load)

    residual = float(np.linalg.norm(matrix @ x - load))
    if load_norm > 0:
        residual /= load_norm
    if not np.isfinite(residual) or residual > SOLVE_RESIDUAL_TOLERANCE:
        raise SolverError("Linear solve failed", iterations, residual)
    _LOGGER.info(
        "Solved %d unknowns with %s solver: %d iterations, residual %.2e",
        len(load),
        method,
        iterations,
        residual,
    )

    full = np.zeros(system.n_total)
    full[system.free] = x
    return SolutionPair(
        phi=full[: system.n_vector],
        u=full[system.n_vector :],
        vector_space=system.vector_space,
        scalar_space=system.scalar_space,
        config=config,
        report=SolverReport(method=method, iterations=iterations, residual=residual),
    )


def evaluate(
    sol: SolutionPair, points
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate a discrete solution at physical points.

    Args:
        sol (SolutionPair): Discrete solution.
        points: Physical points, shape `(2,)` or `(n, 2)`.

    Returns:
        Tuple: `u` `(n,)`, `grad u` `(n, 2)`, `phi` `(n, 2)` and `div phi` `(n,)`.

    Raises:
        ValueError: If a point lies outside the unit disk.
    """
    u, grad_u = sol.scalar_space.evaluate_at(sol.u, points)
    phi, div_phi = sol.vector_space.evaluate_at(sol.phi, points)
    return u, grad_u, phi, div_phi


# auxiliary matrices and loads -----------------------------------------------------


def vector_matrices(
    space: FunctionSpace, degree: int
) -> Tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """Mass and div-div matrices of an H(div) space over all DOFs."""
    size = space.n_dofs

    def mass(xhat, elements, geometry, wdet):
        table = space.tabulate(xhat, elements, geometry)
        return _gram(table.values, wdet), space.dofs.cells[elements]

    def divdiv(xhat, elements, geometry, wdet):
        table = space.tabulate(xhat, elements, geometry)
        return _gram(table.divergence, wdet), space.dofs.cells[elements]

    return (
        _sparse_assembly(space.mesh, degree, size, mass),
        _sparse_assembly(space.mesh, degree, size, divdiv),
    )


def scalar_matrices(
    space: FunctionSpace, degree: int
) -> Tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """Mass and stiffness matrices of a Lagrange space over all DOFs."""
    size = space.n_dofs

    def mass(xhat, elements, geometry, wdet):
        table = space.tabulate(xhat, elements, geometry)
        return _gram(np.asarray(table.values), wdet), space.dofs.cells[elements]

    def stiffness(xhat, elements, geometry, wdet):
        table = space.tabulate(xhat, elements, geometry)
        return _gram(table.gradients, wdet), space.dofs.cells[elements]

    return (
        _sparse_assembly(space.mesh, degree, size, mass),
        _sparse_assembly(space.mesh, degree, size, stiffness),
    )


def vector_load(
    space: FunctionSpace,
    field,
    degree: int,
    divergence=None,
    interface_radius: Optional[float] = None,
) -> np.ndarray:
    """Load `(field, psi_i) + (divergence, div psi_i)` of an H(div) space.

    Args:
        space (FunctionSpace): Vector space.
        field: `field(x, y)` returning `(..., 2)` values, or `None`.
        degree (int): Quadrature degree.
        divergence: Optional scalar `divergence(x, y)`.
        interface_radius (float, optional): Circle across which the data jump.
    """

    def local(xhat, elements, geometry, wdet):
        table = space.tabulate(xhat, elements, geometry)
        x, y = geometry[0][..., 0], geometry[0][..., 1]
        values = np.zeros((len(elements), table.divergence.shape[2]))
        if field is not None:
            values = np.einsum("nqid,nqd->ni", table.values, field(x, y) * wdet[..., None])
        if divergence is not None:
            values = values + np.einsum("nqi,nq->ni", table.divergence, divergence(x, y) * wdet)
        return values, space.dofs.cells[elements]

    return _load_assembly(space.mesh, degree, space.n_dofs, local, interface_radius)


def scalar_load(
    space: FunctionSpace,
    field,
    degree: int,
    gradient=None,
    interface_radius: Optional[float] = None,
) -> np.ndarray:
    """Load `(field, v_i) + (gradient, grad v_i)` of a Lagrange space."""

    def local(xhat, elements, geometry, wdet):
        table = space.tabulate(xhat, elements, geometry)
        x, y = geometry[0][..., 0], geometry[0][..., 1]
        values = np.zeros((len(elements), table.gradients.shape[2]))
        if field is not None:
            values = np.einsum("nqi,nq->ni", table.values, field(x, y) * wdet)
        if gradient is not None:
            values = values + np.einsum(
                "nqid,nqd->ni", table.gradients, gradient(x, y) * wdet[..., None]
            )
        return values, space.dofs.cells[elements]

    return _load_assembly(space.mesh, degree, space.n_dofs, local, interface_radius)


def constrained_solve(
    matrix: sparse.spmatrix, rhs: np.ndarray, constrained: np.ndarray
) -> np.ndarray:
    """Solve with constrained unknowns fixed at zero."""
    free = np.flatnonzero(~constrained)
    solution = np.zeros(len(rhs))
    if len(free):
        reduced = sparse.csc_matrix(matrix)[free][:, free]
        solution[free] = splinalg.splu(reduced.tocsc()).solve(rhs[free])
    return solution


def l2_projection(space: FunctionSpace, field, degree: int) -> np.ndarray:
    """Componentwise L2 projection onto the space with its boundary condition.

    Args:
        space (FunctionSpace): Target space.
        field: Physical field `field(x, y)`.
        degree (int): Quadrature degree.

    Returns:
        np.ndarray: Global coefficients.
    """
    if space.is_vector:
        mass, _ = vector_matrices(space, degree)
        rhs = vector_load(space, field, degree)
    else:
        mass, _ = scalar_matrices(space, degree)
        rhs = scalar_load(space, field, degree)
    return constrained_solve(mass, rhs, space.dofs.constrained)


def product_norm_matrix(
    vector_space: FunctionSpace, scalar_space: FunctionSpace, degree: int
) -> sparse.csr_matrix:
    """Gram matrix of the H(div) x H1 norm in the coupled ordering."""
    v_mass, v_div = vector_matrices(vector_space, degree)
    s_mass, s_stiff = scalar_matrices(scalar_space, degree)
    return sparse.block_diag([v_mass + v_div, s_mass + s_stiff], format="csr")


def b_energy(
    mesh: Mesh,
    config: ProblemConfig,
    phi,
    div_phi: ScalarField,
    u: ScalarField,
    grad_u,
    degree: Optional[int] = None,
) -> float:
    """Evaluate `b((phi, u), (phi, u))` for callback fields.

    ```python
    >>> mesh = build_coarse_disk_mesh(6)
    >>> zero = lambda x, y: np.zeros(x.shape + (2,))
    >>> one = lambda x, y: np.ones_like(x)
    >>> b_energy(mesh, ProblemConfig(), zero, lambda x, y: 0 * x, one, zero)
    3.14159265358979...
    ```
    """
    gamma = config.gamma

    def integrand(x, y):
        first = div_phi(x, y) + gamma * u(x, y)
        second = grad_u(x, y) + phi(x, y)
        return first**2 + np.sum(second**2, axis=-1)

    return mesh.integrate(integrand, degree or config.quadrature_degree)


def residual_functional(
    system: FoslsSystem,
    f: ScalarField,
    phi,
    div_phi: ScalarField,
    u: ScalarField,
    grad_u,
    interface_radius: Optional[float] = None,
) -> np.ndarray:
    """`F(psi_i, v_i) - b((phi, u), (psi_i, v_i))` for every free basis pair.

    Vanishes for the exact solution up to quadrature error.
    """
    vector_space, scalar_space = system.vector_space, system.scalar_space
    gamma, mesh = system.config.gamma, vector_space.mesh

    def local(xhat, elements, geometry, wdet):
        first, second, cells = _residual_tables(
            vector_space, scalar_space, gamma, xhat, elements, geometry
        )
        x, y = geometry[0][..., 0], geometry[0][..., 1]
        defect = (f(x, y) - div_phi(x, y) - gamma * u(x, y)) * wdet
        flux = (grad_u(x, y) + phi(x, y)) * wdet[..., None]
        values = np.einsum("nqi,nq->ni", first, defect) - np.einsum("nqid,nqd->ni", second, flux)
        return values, cells

    full = _load_assembly(
        mesh, system.config.quadrature_degree, system.n_total, local, interface_radius
    )
    return full[system.free]


def export_matrix(system: FoslsSystem, path: Union[str, Path]) -> Path:
    """Write the free-restricted matrix as `row col value` lines."""
    path = Path(path)
    coo = system.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [
        f"{r} {c} {v!r}"
        for r, c, v in zip(
            coo.row[order].tolist(), coo.col[order].tolist(), coo.data[order].tolist()
        )
    ]
    path.write_text("\n".join(lines) + ("\n" if lines else ""))
    return path
