"""Lagrange, Raviart-Thomas and Brezzi-Douglas-Marini spaces.

Reference bases are built from monomials in coordinates centred at the
reference barycentre and made dual to their degrees of freedom by inverting
the generalized Vandermonde matrix once per (family, degree):

- Lagrange: point values at equispaced nodes, ordered vertices, edge nodes
  (edge `k` runs from local vertex `k+1` to `k+2`), interior nodes.
- RT / BDM: normal moments against Legendre polynomials on each edge, then
  moments against the vector bubbles (fields with vanishing normal moments).

Global vector DOFs are edge moments taken with respect to the global edge
orientation (low to high vertex index), so an element traversing an edge the
other way sees moment `j` with the sign `(-1)^(j+1)`.
"""

from functools import lru_cache
from typing import Callable, NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.special import eval_legendre

from .mesh import ElementMap, Mesh, check_reference_points
from .objects import (
    BasisEval,
    DofMap,
    Family,
    ScalarBC,
    ScalarSpaceSpec,
    VectorBC,
    VectorSpaceSpec,
)
from .quadrature import line_rule, triangle_rule
from .resources import MAX_QUADRATURE_DEGREE

SpaceSpec = Union[ScalarSpaceSpec, VectorSpaceSpec]

_CENTRE = 1.0 / 3.0
_EDGE_ENDS = ((1, 2), (2, 0), (0, 1))
_EDGE_NORMALS = np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
_REFERENCE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def _exponents(p: int, homogeneous: bool = False):
    degrees = [p] if homogeneous else range(p + 1)
    return [(d - j, j) for d in degrees for j in range(d + 1)]


def _monomials(points: np.ndarray, exponents) -> Tuple[np.ndarray, np.ndarray]:
    """Values `(n, M)` and gradients `(n, M, 2)` of centred monomials."""
    cx, cy = points[:, 0] - _CENTRE, points[:, 1] - _CENTRE
    values = np.empty((len(points), len(exponents)))
    grads = np.zeros((len(points), len(exponents), 2))
    for m, (a, b) in enumerate(exponents):
        values[:, m] = cx**a * cy**b
        if a:
            grads[:, m, 0] = a * cx ** (a - 1) * cy**b
        if b:
            grads[:, m, 1] = b * cx**a * cy ** (b - 1)
    return values, grads


def dimension(spec: SpaceSpec) -> int:
    """Local dimension of a reference space."""
    if isinstance(spec, ScalarSpaceSpec):
        return (spec.p_s + 1) * (spec.p_s + 2) // 2
    return spec.dimension


# scalar ----------------------------------------------------------------------


def lagrange_nodes(p: int) -> np.ndarray:
    """Equispaced Lagrange nodes of degree `p` in DOF order."""
    nodes = [_REFERENCE[k] for k in range(3)]
    for a, b in _EDGE_ENDS:
        nodes += [_REFERENCE[a] + j / p * (_REFERENCE[b] - _REFERENCE[a]) for j in range(1, p)]
    nodes += [np.array([i / p, j / p]) for j in range(1, p) for i in range(1, p - j)]
    return np.array(nodes)


@lru_cache(maxsize=None)
def _lagrange_coefficients(p: int) -> np.ndarray:
    vandermonde, _ = _monomials(lagrange_nodes(p), _exponents(p))
    return np.linalg.inv(vandermonde)


def eval_scalar_basis(spec: ScalarSpaceSpec, points) -> BasisEval:
    """Tabulate the nodal Lagrange basis at reference points.

    ```python
    >>> basis = eval_scalar_basis(ScalarSpaceSpec(p_s=1), [[1 / 3, 1 / 3]])
    >>> basis.values
    array([[0.33333333, 0.33333333, 0.33333333]])
    ```

    Args:
        spec (ScalarSpaceSpec): Degree of the space.
        points: Reference points, shape `(n, 2)`.

    Returns:
        BasisEval: Values `(n, N)` and reference gradients `(n, N, 2)`.
    """
    points = check_reference_points(points)
    coeffs = _lagrange_coefficients(spec.p_s)
    values, grads = _monomials(points, _exponents(spec.p_s))
    return BasisEval(
        values=values @ coeffs, gradients=np.einsum("nmd,mi->nid", grads, coeffs)
    )


# vector ----------------------------------------------------------------------


class _VectorTables(NamedTuple):
    coefficients: np.ndarray
    points: np.ndarray
    functionals: np.ndarray
    unisolvence: np.ndarray


def _raw_vector(spec: VectorSpaceSpec, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Monomial spanning set of the reference space: values and divergences."""
    degree = spec.p_v if spec.family is Family.BDM else spec.p_v - 1
    values, grads = _monomials(points, _exponents(degree))
    n, m = values.shape
    raw = np.zeros((n, 2 * m, 2))
    div = np.empty((n, 2 * m))
    raw[:, :m, 0] = values
    raw[:, m:, 1] = values
    div[:, :m] = grads[..., 0]
    div[:, m:] = grads[..., 1]
    if spec.family is Family.RT:
        hom, hom_grads = _monomials(points, _exponents(degree, homogeneous=True))
        centred = points - _CENTRE
        extra = centred[:, None, :] * hom[..., None]
        extra_div = 2.0 * hom + np.einsum("nmd,nd->nm", hom_grads, centred)
        raw = np.concatenate([raw, extra], axis=1)
        div = np.concatenate([div, extra_div], axis=1)
    return raw, div


@lru_cache(maxsize=None)
def _vector_tables(spec: VectorSpaceSpec) -> _VectorTables:
    key = VectorSpaceSpec(family=spec.family, p_v=spec.p_v)
    if key != spec:
        return _vector_tables(key)
    n_moments = spec.edge_moments
    s, ws = line_rule(spec.p_v + 6)
    legendre = np.array([eval_legendre(j, 2.0 * s - 1.0) for j in range(n_moments)])

    edge_points, edge_weights = [], []
    for k, (a, b) in enumerate(_EDGE_ENDS):
        edge_points.append(_REFERENCE[a] + s[:, None] * (_REFERENCE[b] - _REFERENCE[a]))
        block = np.zeros((n_moments, len(s), 2))
        block[...] = (legendre * ws)[..., None] * _EDGE_NORMALS[k]
        edge_weights.append(block)

    rule = triangle_rule(min(2 * spec.p_v + 6, MAX_QUADRATURE_DEGREE))
    points = np.vstack(edge_points + [rule.nodes])
    n_edge_points = 3 * len(s)
    n_raw = spec.dimension
    functionals = np.zeros((n_raw, len(points), 2))
    for k in range(3):
        rows = slice(k * n_moments, (k + 1) * n_moments)
        functionals[rows, k * len(s) : (k + 1) * len(s)] = edge_weights[k]

    raw, _ = _raw_vector(spec, points)
    edge_matrix = np.einsum("iqd,qjd->ij", functionals[: 3 * n_moments], raw)
    bubbles = linalg.null_space(edge_matrix)
    bubble_values = np.einsum("qjd,jb->bqd", raw[n_edge_points:], bubbles)
    functionals[3 * n_moments :, n_edge_points:] = bubble_values * rule.weights[None, :, None]

    unisolvence = np.einsum("iqd,qjd->ij", functionals, raw)
    coefficients = np.linalg.inv(unisolvence)
    for array in (coefficients, points, functionals, unisolvence):
        array.flags.writeable = False
    return _VectorTables(coefficients, points, functionals, unisolvence)


def eval_vector_basis(spec: VectorSpaceSpec, points) -> BasisEval:
    """Tabulate the RT or BDM reference basis.

    Args:
        spec (VectorSpaceSpec): Family and degree.
        points: Reference points, shape `(n, 2)`.

    Returns:
        BasisEval: Values `(n, N, 2)` and reference divergences `(n, N)`.
    """
    points = check_reference_points(points)
    tables = _vector_tables(spec)
    raw, div = _raw_vector(spec, points)
    return BasisEval(
        values=np.einsum("njd,ji->nid", raw, tables.coefficients),
        divergence=div @ tables.coefficients,
    )


def unisolvence_matrix(spec: VectorSpaceSpec) -> np.ndarray:
    """Local DOF functionals applied to the monomial spanning set."""
    return np.array(_vector_tables(spec).unisolvence)


def functional_points(spec: VectorSpaceSpec) -> np.ndarray:
    """Reference points at which the local DOF functionals sample a field."""
    return _vector_tables(spec).points


def vector_functionals(
    spec: VectorSpaceSpec, field: Union[Callable[[np.ndarray], np.ndarray], np.ndarray]
) -> np.ndarray:
    """Apply the local DOF functionals to a reference field.

    Args:
        spec (VectorSpaceSpec): Family and degree.
        field: Callable mapping reference points `(n, 2)` to values `(n, 2)`,
            or its values at `functional_points(spec)` with optional leading
            axes, shape `(..., n, 2)`.

    Returns:
        np.ndarray: Functional values, shape `(..., N)`.
    """
    tables = _vector_tables(spec)
    values = field(tables.points) if callable(field) else np.asarray(field)
    return np.einsum("iqd,...qd->...i", tables.functionals, values)


def piola(
    jac: np.ndarray, det: np.ndarray, values: np.ndarray, divergence: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Contravariant Piola transform of tabulated reference fields.

    `jac` is `(..., 2, 2)`, `det` is `(...)`, `values` is `(..., N, 2)` and
    `divergence` is `(..., N)`.
    """
    if np.any(np.abs(det) <= np.finfo(float).tiny):
        raise ValueError("Invalid element map: singular Jacobian")
    pushed = np.einsum("...ij,...nj->...ni", jac, values) / det[..., None, None]
    if divergence is None:
        return pushed, None
    return pushed, divergence / det[..., None]


def piola_push_forward(
    fmap: ElementMap, values, xhat, divergence=None
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Push reference vector values forward through one element map.

    ```python
    >>> fmap = ElementMap([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]])
    >>> piola_push_forward(fmap, [[1.0, 0.0]], [[0.2, 0.2]])[0]
    array([[0.5, 0. ]])
    ```

    Args:
        fmap (ElementMap): Element map.
        values: Reference field values at `xhat`, shape `(n, 2)` or `(n, N, 2)`.
        xhat: Reference points, shape `(n, 2)`.
        divergence: Optional reference divergences, shape `(n,)` or `(n, N)`.

    Returns:
        Tuple[np.ndarray, Optional[np.ndarray]]: Physical values and divergences
        in the input shapes.

    Raises:
        ValueError: If the Jacobian is singular at some point.
    """
    jac = fmap.jacobian(xhat)
    values = np.asarray(values, dtype=float)
    single = values.ndim == 2
    stacked = values[:, None, :] if single else values
    div = None if divergence is None else np.asarray(divergence, dtype=float)
    if div is not None and single:
        div = div[:, None]
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    pushed, pushed_div = piola(jac, det, stacked, div)
    if single:
        return pushed[:, 0], None if pushed_div is None else pushed_div[:, 0]
    return pushed, pushed_div


# degrees of freedom -----------------------------------------------------------


def build_dof_map(mesh: Mesh, spec: SpaceSpec) -> DofMap:
    """Number the global DOFs of a space on a mesh.

    ```python
    >>> mesh = build_coarse_disk_mesh(4)
    >>> build_dof_map(mesh, ScalarSpaceSpec(p_s=3)).n_dofs
    25
    ```

    Args:
        mesh (Mesh): Mesh.
        spec: Scalar or vector space specification.

    Returns:
        DofMap: Cells, orientation signs and boundary-condition mask.
    """
    if isinstance(spec, ScalarSpaceSpec):
        return _scalar_dof_map(mesh, spec)
    return _vector_dof_map(mesh, spec)


def _scalar_dof_map(mesh: Mesh, spec: ScalarSpaceSpec) -> DofMap:
    p = spec.p_s
    per_edge, per_cell = p - 1, (p - 1) * (p - 2) // 2
    n_vertices, n_edges, n_cells = mesh.n_vertices, mesh.n_edges, mesh.n_triangles
    blocks = [mesh.triangles]
    if per_edge:
        local = np.arange(per_edge)
        for k in range(3):
            edges = mesh.tri_edges[:, k][:, None]
            forward = mesh.tri_edge_sign[:, k][:, None] > 0
            position = np.where(forward, local[None, :], per_edge - 1 - local[None, :])
            blocks.append(n_vertices + edges * per_edge + position)
    if per_cell:
        base = n_vertices + n_edges * per_edge
        blocks.append(base + np.arange(n_cells)[:, None] * per_cell + np.arange(per_cell))
    cells = np.hstack(blocks)
    n_dofs = n_vertices + n_edges * per_edge + n_cells * per_cell

    constrained = np.zeros(n_dofs, dtype=bool)
    if spec.bc is ScalarBC.ZERO_TRACE:
        constrained[mesh.boundary_vertices] = True
        for e in np.flatnonzero(mesh.boundary):
            start = n_vertices + e * per_edge
            constrained[start : start + per_edge] = True
    return DofMap(cells=cells, signs=np.ones(cells.shape), constrained=constrained, n_dofs=n_dofs)


def _vector_dof_map(mesh: Mesh, spec: VectorSpaceSpec) -> DofMap:
    n_moments = spec.edge_moments
    per_cell = spec.dimension - 3 * n_moments
    moments = np.arange(n_moments)
    flipped = (-1.0) ** (moments + 1)
    cells, signs = [], []
    for k in range(3):
        cells.append(mesh.tri_edges[:, k][:, None] * n_moments + moments)
        forward = mesh.tri_edge_sign[:, k][:, None] > 0
        signs.append(np.where(forward, 1.0, flipped[None, :]))
    base = mesh.n_edges * n_moments
    if per_cell:
        cells.append(base + np.arange(mesh.n_triangles)[:, None] * per_cell + np.arange(per_cell))
        signs.append(np.ones((mesh.n_triangles, per_cell)))
    n_dofs = base + mesh.n_triangles * per_cell

    constrained = np.zeros(n_dofs, dtype=bool)
    if spec.bc is VectorBC.ZERO_NORMAL_TRACE:
        boundary = np.flatnonzero(mesh.boundary)
        constrained[(boundary[:, None] * n_moments + moments).ravel()] = True
    return DofMap(
        cells=np.hstack(cells), signs=np.hstack(signs), constrained=constrained, n_dofs=n_dofs
    )


# global spaces ----------------------------------------------------------------


class Tabulation(NamedTuple):
    """Physical basis functions of a block of elements at shared reference points.

    Scalar spaces fill `values (n, m, N)` and `gradients (n, m, N, 2)`;
    vector spaces fill `values (n, m, N, 2)` and `divergence (n, m, N)`.
    Orientation signs are applied.
    """

    values: np.ndarray
    gradients: Optional[np.ndarray] = None
    divergence: Optional[np.ndarray] = None


class FunctionSpace:
    """A finite element space on a mesh.

    Args:
        mesh (Mesh): Mesh.
        spec: Scalar or vector space specification.
    """

    def __init__(self, mesh: Mesh, spec: SpaceSpec):
        self.mesh = mesh
        self.spec = spec
        self.dofs = build_dof_map(mesh, spec)

    def __repr__(self):
        return f"FunctionSpace({self.spec!r}, n_dofs={self.n_dofs})"

    @property
    def is_vector(self) -> bool:
        """Whether this is an H(div) space."""
        return isinstance(self.spec, VectorSpaceSpec)

    @property
    def n_dofs(self) -> int:
        """Number of global DOFs, constrained ones included."""
        return self.dofs.n_dofs

    @property
    def degree(self) -> int:
        """Largest polynomial degree of the reference space."""
        return self.spec.p_v if self.is_vector else self.spec.p_s

    def tabulate(self, xhat: np.ndarray, elements: np.ndarray, geometry=None) -> Tabulation:
        """Physical basis functions on `elements` at reference points `xhat`.

        Args:
            xhat (np.ndarray): Reference points, shape `(m, 2)`.
            elements (np.ndarray): Element indices, shape `(n,)`.
            geometry: Optional output of `Mesh.geometry` for the same points.

        Returns:
            Tabulation: Signed physical basis values and derivatives.
        """
        _, jac, det = geometry if geometry is not None else self.mesh.geometry(xhat, elements)
        signs = self.dofs.signs[elements][:, None, :]
        if self.is_vector:
            basis = eval_vector_basis(self.spec, xhat)
            values, divergence = piola(jac, det, basis.values[None], basis.divergence[None])
            return Tabulation(values=values * signs[..., None], divergence=divergence * signs)
        basis = eval_scalar_basis(self.spec, xhat)
        inv_t = np.empty_like(jac)
        inv_t[..., 0, 0] = jac[..., 1, 1]
        inv_t[..., 0, 1] = -jac[..., 1, 0]
        inv_t[..., 1, 0] = -jac[..., 0, 1]
        inv_t[..., 1, 1] = jac[..., 0, 0]
        inv_t /= det[..., None, None]
        gradients = np.einsum("emij,mkj->emki", inv_t, basis.gradients)
        values = np.broadcast_to(basis.values, det.shape + basis.values.shape[-1:])
        return Tabulation(values=values, gradients=gradients)

    def evaluate(
        self, coefficients: np.ndarray, xhat: np.ndarray, elements: np.ndarray, geometry=None
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Values and derivative (gradient or divergence) of a discrete field.

        Returns:
            Tuple[np.ndarray, np.ndarray]: For scalar spaces values `(n, m)` and
            gradients `(n, m, 2)`; for vector spaces values `(n, m, 2)` and
            divergences `(n, m)`.
        """
        table = self.tabulate(xhat, elements, geometry)
        local = np.asarray(coefficients)[self.dofs.cells[elements]]
        if self.is_vector:
            return (
                np.einsum("nmid,ni->nmd", table.values, local),
                np.einsum("nmi,ni->nm", table.divergence, local),
            )
        return (
            np.einsum("nmi,ni->nm", table.values, local),
            np.einsum("nmid,ni->nmd", table.gradients, local),
        )

    def evaluate_at(self, coefficients: np.ndarray, points) -> Tuple[np.ndarray, np.ndarray]:
        """Evaluate a discrete field at physical points.

        Raises:
            ValueError: If a point lies outside the disk.
        """
        elements, xhat = self.mesh.locate(points)
        values, derivative = [], []
        for element, ref in zip(elements, xhat):
            value, deriv = self.evaluate(coefficients, ref[None], np.array([element]))
            values.append(value[0, 0])
            derivative.append(deriv[0, 0])
        return np.array(values), np.array(derivative)

    def interpolate(self, field: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
        """Canonical interpolant of a physical field.

        Lagrange spaces take nodal values; vector spaces apply the edge and
        interior moments to the Piola pull-back of the field.

        Args:
            field: `field(x, y)` returning values of shape `x.shape` for scalar
                spaces and `x.shape + (2,)` for vector spaces.

        Returns:
            np.ndarray: Global coefficients, constrained DOFs included.
        """
        coefficients = np.zeros(self.n_dofs)
        if not self.is_vector:
            nodes = lagrange_nodes(self.spec.p_s)
            for elements in self.mesh.chunks():
                points, _, _ = self.mesh.geometry(nodes, elements)
                coefficients[self.dofs.cells[elements]] = field(points[..., 0], points[..., 1])
            return coefficients
        xhat = functional_points(self.spec)
        for elements in self.mesh.chunks():
            points, jac, det = self.mesh.geometry(xhat, elements)
            values = np.asarray(field(points[..., 0], points[..., 1]))
            # reference field det J^-1 v, using adj(J) = det J^-1
            pulled = np.stack(
                [
                    jac[..., 1, 1] * values[..., 0] - jac[..., 0, 1] * values[..., 1],
                    -jac[..., 1, 0] * values[..., 0] + jac[..., 0, 0] * values[..., 1],
                ],
                axis=-1,
            )
            local = vector_functionals(self.spec, pulled)
            coefficients[self.dofs.cells[elements]] = local * self.dofs.signs[elements]
        return coefficients
