"""Curved triangulations of the unit disk.

Every triangle is stored counterclockwise with its (at most one) curved edge
as local edge 0, i.e. between local vertices 1 and 2. Straight triangles use
the affine map of their corners; curved ones add an edge bubble that bends
edge 0 onto a circular arc centred at the origin:

    F(x, y) = P0 + x (P1 - P0) + y (P2 - P0) + x y q(t),  t = (1 + y - x) / 2

where `q(t) = (arc(t) - chord(t)) / (t (1 - t))`. The bubble vanishes on the
two straight edges, so neighbours see straight edges there, and it maps the
reference edge x + y = 1 onto the arc exactly.
"""

import logging
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from .quadrature import triangle_rule
from .resources import (
    ASSEMBLY_CHUNK,
    GEOMETRY_TOLERANCE,
    LOCATE_TOLERANCE,
    NEWTON_MAX_ITERATIONS,
    NEWTON_TOLERANCE,
    REFERENCE_TOLERANCE,
    SPLIT_ANGULAR_POINTS,
)

_LOGGER = logging.getLogger(__name__)

REFERENCE_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
"""Vertices of the reference triangle; its area is exactly 1/2."""
REFERENCE_VERTICES.flags.writeable = False

REFERENCE_AREA = 0.5
"""Area of the reference triangle."""

_SINGULAR_WEIGHT = 1e-12
_VALIDATION_DEGREE = 10


def check_reference_points(xhat: np.ndarray) -> np.ndarray:
    """Validate a batch of reference points.

    Args:
        xhat (np.ndarray): Points of shape `(2,)` or `(n, 2)`.

    Returns:
        np.ndarray: The points as a float array of shape `(n, 2)`.

    Raises:
        ValueError: If a point lies outside the closed reference triangle.
    """
    xhat = np.atleast_2d(np.asarray(xhat, dtype=float))
    x, y = xhat[:, 0], xhat[:, 1]
    outside = (x < -REFERENCE_TOLERANCE) | (y < -REFERENCE_TOLERANCE) | (
        x + y > 1.0 + REFERENCE_TOLERANCE
    )
    if np.any(outside):
        raise ValueError(f"Invalid reference point: {xhat[outside][0].tolist()}")
    return xhat


def _blend(
    corners: np.ndarray,
    radius: np.ndarray,
    theta0: np.ndarray,
    delta: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluate blended maps and Jacobians.

    `corners` is `(n, 3, 2)`, the arc data `(n,)` with radius 0 for straight
    elements, and `x`, `y` broadcast to `(n, m)`. Returns points `(n, m, 2)`
    and Jacobians `(n, m, 2, 2)` with `jac[..., i, j] = dF_i / dxhat_j`.
    """
    n = corners.shape[0]
    x = np.broadcast_to(np.atleast_2d(x), (n, np.shape(x)[-1]))
    y = np.broadcast_to(np.atleast_2d(y), (n, np.shape(y)[-1]))
    p0, p1, p2 = corners[:, 0], corners[:, 1], corners[:, 2]
    e1, e2 = p1 - p0, p2 - p0

    points = p0[:, None, :] + x[..., None] * e1[:, None, :] + y[..., None] * e2[:, None, :]
    jac = np.empty(x.shape + (2, 2))
    jac[..., :, 0] = e1[:, None, :]
    jac[..., :, 1] = e2[:, None, :]

    curved = radius > 0
    if not np.any(curved):
        return points, jac

    xc, yc = x[curved], y[curved]
    c1, c2 = p1[curved][:, None, :], p2[curved][:, None, :]
    t = 0.5 * (1.0 + yc - xc)
    theta = theta0[curved, None] + t * delta[curved, None]
    r = radius[curved, None, None]
    arc = r * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    darc = r * delta[curved, None, None] * np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    tt = t[..., None]
    gap = arc - ((1.0 - tt) * c1 + tt * c2)
    dgap = darc - (c2 - c1)

    weight = tt * (1.0 - tt)
    regular = np.abs(weight) > _SINGULAR_WEIGHT
    safe = np.where(regular, weight, 1.0)
    # at the arc end points q tends to +/- the derivative of the gap
    q = np.where(regular, gap / safe, np.where(tt < 0.5, dgap, -dgap))
    dq = np.where(regular, (dgap * safe - gap * (1.0 - 2.0 * tt)) / safe**2, 0.0)

    xy = (xc * yc)[..., None]
    points[curved] += xy * q
    jac[curved, :, :, 0] += yc[..., None] * q - 0.5 * xy * dq
    jac[curved, :, :, 1] += xc[..., None] * q + 0.5 * xy * dq
    return points, jac


def _arc_data(corners: np.ndarray, radius: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Start angle and signed sweep of the arc from local vertex 1 to 2."""
    p1, p2 = corners[:, 1], corners[:, 2]
    theta0 = np.arctan2(p1[:, 1], p1[:, 0])
    delta = np.arctan2(
        p1[:, 0] * p2[:, 1] - p1[:, 1] * p2[:, 0], p1[:, 0] * p2[:, 0] + p1[:, 1] * p2[:, 1]
    )
    straight = radius <= 0
    return np.where(straight, 0.0, theta0), np.where(straight, 0.0, delta)


def _determinant(jac: np.ndarray) -> np.ndarray:
    return jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]


class ElementMap:
    """Map from the reference triangle onto one element.

    ```python
    >>> fmap = ElementMap([[1.0, 0.0], [3.0, 0.0], [1.0, 2.0]])
    >>> fmap.kind
    'affine'
    >>> fmap.eval([0.25, 0.25])
    array([[1.5, 0.5]])
    ```

    Args:
        corners: Physical vertices, counterclockwise, shape `(3, 2)`.
        radius (float, optional): Radius of the arc replacing the edge from
            the second to the third corner; `None` for an affine map.
    """

    def __init__(self, corners, radius: Optional[float] = None):
        self.corners = np.asarray(corners, dtype=float).reshape(1, 3, 2)
        self.radius = np.array([radius or 0.0])
        self.theta0, self.delta = _arc_data(self.corners, self.radius)

    @property
    def kind(self) -> str:
        """Either `"affine"` or `"arc-blended"`."""
        return "arc-blended" if self.radius[0] > 0 else "affine"

    @property
    def affine_part(self) -> Tuple[np.ndarray, np.ndarray]:
        """Matrix and translation of the affine map through the corners."""
        c = self.corners[0]
        return np.column_stack([c[1] - c[0], c[2] - c[0]]), c[0].copy()

    def eval(self, xhat) -> np.ndarray:
        """Physical images of reference points, shape `(n, 2)`."""
        xhat = check_reference_points(xhat)
        points, _ = _blend(
            self.corners, self.radius, self.theta0, self.delta, xhat[:, 0], xhat[:, 1]
        )
        return points[0]

    def jacobian(self, xhat) -> np.ndarray:
        """Jacobians at reference points, shape `(n, 2, 2)`."""
        xhat = check_reference_points(xhat)
        _, jac = _blend(
            self.corners, self.radius, self.theta0, self.delta, xhat[:, 0], xhat[:, 1]
        )
        return jac[0]

    def inverse(self, points) -> np.ndarray:
        """Reference preimages of physical points by Newton iteration."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(points)
        return _newton(
            np.repeat(self.corners, n, axis=0),
            np.repeat(self.radius, n),
            np.repeat(self.theta0, n),
            np.repeat(self.delta, n),
            points,
        )


def _newton(corners, radius, theta0, delta, points) -> np.ndarray:
    xhat = np.full((len(points), 2), 1.0 / 3.0)
    for _ in range(NEWTON_MAX_ITERATIONS):
        image, jac = _blend(corners, radius, theta0, delta, xhat[:, :1], xhat[:, 1:])
        step = np.linalg.solve(jac[:, 0], (points - image[:, 0])[..., None])[..., 0]
        xhat = np.clip(xhat + step, -0.5, 1.5)
        if np.max(np.abs(step), initial=0.0) < NEWTON_TOLERANCE:
            break
    return xhat


def split_points(degree: int) -> int:
    """Gauss points per direction of `Mesh.split_rule` for a polynomial degree."""
    return degree // 2 + 2


class Mesh:
    """Conforming triangulation of the unit disk with exact circular edges.

    Args:
        vertices: Vertex coordinates, shape `(V, 2)`.
        triangles: Counterclockwise vertex triples, shape `(T, 3)`.
        arcs (Dict[Tuple[int, int], float]): Curved edges as sorted vertex
            pairs mapped to the radius of their circle around the origin.
            Every boundary edge must be an arc of radius 1.
        level (int): Refinement depth.

    Raises:
        ValueError: If the input violates a mesh invariant.
    """

    def __init__(
        self,
        vertices,
        triangles,
        arcs: Dict[Tuple[int, int], float],
        level: int = 0,
    ):
        self.vertices = np.asarray(vertices, dtype=float)
        triangles = np.asarray(triangles, dtype=np.int64).copy()
        self.level = int(level)
        self.arcs = {tuple(sorted(k)): float(v) for k, v in arcs.items()}

        for k, tri in enumerate(triangles):
            local = [
                j
                for j in range(3)
                if tuple(sorted((tri[(j + 1) % 3], tri[(j + 2) % 3]))) in self.arcs
            ]
            if len(local) > 1:
                raise ValueError(f"Invalid triangle {k}: more than one curved edge")
            if local:
                triangles[k] = np.roll(tri, -local[0])
        self.triangles = triangles

        corners = self.vertices[self.triangles]
        e1, e2 = corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]
        area = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        if np.any(area <= 0):
            raise ValueError(f"Invalid triangle {int(np.argmin(area))}: not counterclockwise")

        self._build_edges()

        self.element_radius = np.where(
            np.array([tuple(sorted(pair)) in self.arcs for pair in self.triangles[:, 1:]]),
            self.edge_radius[self.tri_edges[:, 0]],
            0.0,
        )
        self.theta0, self.delta = _arc_data(corners, self.element_radius)
        self._validate()
        self._tree: Optional[cKDTree] = None

        for name in ("vertices", "triangles", "edges", "tri_edges", "tri_edge_sign"):
            getattr(self, name).flags.writeable = False
        _LOGGER.debug(
            "Mesh level %d: %d vertices, %d edges, %d triangles",
            self.level,
            self.n_vertices,
            self.n_edges,
            self.n_triangles,
        )

    def _build_edges(self):
        tri = self.triangles
        local = np.stack([tri[:, [1, 2]], tri[:, [2, 0]], tri[:, [0, 1]]], axis=1)
        keys = np.sort(local, axis=2).reshape(-1, 2)
        edges, inverse, counts = np.unique(
            keys, axis=0, return_inverse=True, return_counts=True
        )
        if counts.max() > 2:
            raise ValueError("Invalid mesh: an edge is shared by more than two triangles")
        self.edges = edges
        self.tri_edges = inverse.reshape(-1, 3)
        self.tri_edge_sign = np.where(local[..., 0] < local[..., 1], 1, -1)

        owner = np.argsort(inverse.ravel(), kind="stable") // 3
        starts = np.cumsum(counts) - counts
        self.edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
        self.edge_tris[:, 0] = owner[starts]
        shared = counts == 2
        self.edge_tris[shared, 1] = owner[starts[shared] + 1]
        self.boundary = counts == 1

        self.edge_radius = np.array(
            [self.arcs.get((int(a), int(b)), 0.0) for a, b in edges], dtype=float
        )
        if len(self.arcs) != np.count_nonzero(self.edge_radius):
            raise ValueError("Invalid arcs: every curved edge must be a mesh edge")

    def _validate(self):
        if np.any(np.abs(self.edge_radius[self.boundary] - 1.0) > GEOMETRY_TOLERANCE):
            raise ValueError("Invalid mesh: boundary edges must be unit circle arcs")
        ends = self.edges[self.edge_radius > 0]
        radii = self.edge_radius[self.edge_radius > 0]
        off = np.abs(np.linalg.norm(self.vertices[ends], axis=2) - radii[:, None])
        if off.size and off.max() > GEOMETRY_TOLERANCE:
            raise ValueError(f"Invalid mesh: arc end point off its circle by {off.max():.3e}")
        rule = triangle_rule(_VALIDATION_DEGREE)
        for start in range(0, self.n_triangles, ASSEMBLY_CHUNK):
            elements = np.arange(start, min(start + ASSEMBLY_CHUNK, self.n_triangles))
            _, _, det = self.geometry(rule.nodes, elements)
            if np.any(det <= 0):
                bad = elements[np.argmin(det.min(axis=1))]
                raise ValueError(f"Invalid element {bad}: nonpositive Jacobian determinant")

    def __repr__(self):
        return (
            f"Mesh(level={self.level}, vertices={self.n_vertices}, "
            f"edges={self.n_edges}, triangles={self.n_triangles})"
        )

    @property
    def n_vertices(self) -> int:
        """Number of vertices."""
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        """Number of edges."""
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        """Number of triangles."""
        return len(self.triangles)

    @property
    def boundary_vertices(self) -> np.ndarray:
        """Sorted indices of vertices on the unit circle."""
        return np.unique(self.edges[self.boundary])

    @property
    def curved(self) -> np.ndarray:
        """Boolean mask of elements with an arc-blended map."""
        return self.element_radius > 0

    def element_map(self, k: int) -> ElementMap:
        """Map of element `k`."""
        radius = self.element_radius[k]
        return ElementMap(self.vertices[self.triangles[k]], radius if radius > 0 else None)

    def geometry(
        self, xhat: np.ndarray, elements: Optional[np.ndarray] = None
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Physical points, Jacobians and determinants at shared reference points.

        Args:
            xhat (np.ndarray): Reference points, shape `(m, 2)`.
            elements (np.ndarray, optional): Element indices; all by default.

        Returns:
            Tuple[np.ndarray, np.ndarray, np.ndarray]: Arrays of shape
            `(n, m, 2)`, `(n, m, 2, 2)` and `(n, m)`.
        """
        xhat = check_reference_points(xhat)
        if elements is None:
            elements = np.arange(self.n_triangles)
        points, jac = _blend(
            self.vertices[self.triangles[elements]],
            self.element_radius[elements],
            self.theta0[elements],
            self.delta[elements],
            xhat[:, 0][None, :],
            xhat[:, 1][None, :],
        )
        return points, jac, _determinant(jac)

    def chunks(self):
        """Yield element index blocks of at most `ASSEMBLY_CHUNK` elements."""
        for start in range(0, self.n_triangles, ASSEMBLY_CHUNK):
            yield np.arange(start, min(start + ASSEMBLY_CHUNK, self.n_triangles))

    def integrate(
        self,
        fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
        degree: int,
        interface_radius: Optional[float] = None,
    ) -> float:
        """Integrate `fn(x, y)` over the disk through the element maps.

        ```python
        >>> mesh = build_coarse_disk_mesh(6)
        >>> mesh.integrate(lambda x, y: np.ones_like(x), 10)
        3.14159265358979...
        ```

        Args:
            fn: Integrand, vectorised over point arrays.
            degree (int): Degree of the triangle rule.
            interface_radius (float, optional): Circle across which `fn` may
                jump; elements it cuts use `split_rule`.
        """
        rule = triangle_rule(degree)
        cut = self.cut_elements(interface_radius) if interface_radius else np.empty(0, int)
        total = 0.0
        for elements in self.chunks():
            points, _, det = self.geometry(rule.nodes, elements)
            values = fn(points[..., 0], points[..., 1])
            det = np.where(np.isin(elements, cut)[:, None], 0.0, det)
            total += float(np.sum((values * det) @ rule.weights))
        for k in cut:
            xhat, weights = self.split_rule(k, interface_radius, split_points(degree))
            points = self.element_map(k).eval(xhat)
            total += float(weights @ fn(points[:, 0], points[:, 1]))
        return total

    def diameters(self) -> np.ndarray:
        """Largest vertex distance per element."""
        corners = self.vertices[self.triangles]
        return np.max(
            np.linalg.norm(corners[:, [0, 1, 2]] - corners[:, [1, 2, 0]], axis=2), axis=1
        )

    @property
    def h(self) -> float:
        """Mesh size, the largest element diameter."""
        return float(self.diameters().max())

    def quality(self) -> Tuple[float, float]:
        """Assumption constants of the affine parts `A_K`.

        Returns:
            Tuple[float, float]: `max ||A_K'|| / h_K` and `max h_K ||A_K'^-1||`.
        """
        corners = self.vertices[self.triangles]
        affine = np.stack([corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]], axis=2)
        h = self.diameters()
        upper = np.linalg.norm(affine, ord=2, axis=(1, 2)) / h
        lower = h * np.linalg.norm(np.linalg.inv(affine), ord=2, axis=(1, 2))
        return float(upper.max()), float(lower.max())

    def cut_elements(self, radius: float) -> np.ndarray:
        """Elements whose interior meets the circle of `radius` around the origin."""
        corners = self.vertices[self.triangles]
        outer = np.linalg.norm(corners, axis=2).max(axis=1)
        start = corners
        edge = np.roll(corners, -1, axis=1) - corners
        lam = np.clip(
            -np.sum(start * edge, axis=2) / np.maximum(np.sum(edge**2, axis=2), 1e-300), 0.0, 1.0
        )
        distance = np.linalg.norm(start + lam[..., None] * edge, axis=2)
        # local edge 0 joins corners 1 and 2; curved ones keep their arc radius
        distance[:, 1] = np.where(self.curved, self.element_radius, distance[:, 1])
        inner = distance.min(axis=1)
        slack = REFERENCE_TOLERANCE
        return np.flatnonzero((inner < radius - slack) & (outer > radius + slack))

    def split_rule(
        self, element: int, radius: float, n_points: int
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Polar quadrature over one element, split at the circle of `radius`.

        Every ray from the origin meets the element in one interval, and
        curved edges are arcs around the origin, so the element is integrated
        in polar coordinates with breakpoints at vertex angles and at the
        angles where straight edges cross the circle. Radial segments are
        polynomial in r; the angular direction uses at least
        `SPLIT_ANGULAR_POINTS` points since the distance to a straight edge is
        rational in the angle.

        Args:
            element (int): Element index.
            radius (float): Radius of the splitting circle.
            n_points (int): Gauss points per radial segment, and the least
                number per angular piece.

        Returns:
            Tuple[np.ndarray, np.ndarray]: Reference points `(m, 2)` and
            physical weights `(m,)`.
        """
        corners = self.vertices[self.triangles[element]]
        centre = np.arctan2(*corners.mean(axis=0)[::-1])
        arc_radius = self.element_radius[element]

        def rel(angle):
            return (np.asarray(angle) - centre + np.pi) % (2 * np.pi) - np.pi

        at_origin = np.linalg.norm(corners, axis=1) < GEOMETRY_TOLERANCE
        angles = rel(np.arctan2(corners[~at_origin, 1], corners[~at_origin, 0]))
        low, high = angles.min(), angles.max()
        breaks = set(angles.tolist())
        for j in range(3):
            if j == 0 and arc_radius > 0:
                continue
            p, e = corners[(j + 1) % 3], corners[(j + 2) % 3] - corners[(j + 1) % 3]
            qa, qb, qc = e @ e, 2 * p @ e, p @ p - radius**2
            disc = qb * qb - 4 * qa * qc
            if disc > 0:
                for lam in ((-qb - np.sqrt(disc)) / (2 * qa), (-qb + np.sqrt(disc)) / (2 * qa)):
                    if 0.0 < lam < 1.0:
                        point = p + lam * e
                        breaks.add(float(rel(np.arctan2(point[1], point[0]))))
        breaks = np.array(sorted(t for t in breaks if low <= t <= high))

        nodes, weights = np.polynomial.legendre.leggauss(n_points)
        n_theta = max(n_points, SPLIT_ANGULAR_POINTS)
        theta_nodes, theta_weights = np.polynomial.legendre.leggauss(n_theta)
        points, point_weights = [], []
        for a, b in zip(breaks[:-1], breaks[1:]):
            if b - a <= REFERENCE_TOLERANCE:
                continue
            theta = 0.5 * (a + b) + 0.5 * (b - a) * theta_nodes
            w_theta = 0.5 * (b - a) * theta_weights
            direction = np.column_stack([np.cos(theta + centre), np.sin(theta + centre)])
            hits = self._ray_hits(corners, arc_radius, direction, rel)
            r_in = np.zeros(n_theta) if at_origin.any() else np.nanmin(hits, axis=1)
            r_out = np.nanmax(hits, axis=1)
            for lo, hi in ((r_in, np.minimum(r_out, radius)), (np.maximum(r_in, radius), r_out)):
                length = np.maximum(hi - lo, 0.0)
                r = lo[..., None] + 0.5 * length[..., None] * (1.0 + nodes[None, :])
                w = w_theta[:, None] * 0.5 * length[:, None] * weights[None, :] * r
                points.append((r[..., None] * direction[:, None, :]).reshape(-1, 2))
                point_weights.append(w.ravel())
        points, point_weights = np.vstack(points), np.concatenate(point_weights)
        keep = point_weights > 0
        points, point_weights = points[keep], point_weights[keep]
        n = len(points)
        xhat = _newton(
            np.repeat(corners[None], n, axis=0),
            np.full(n, arc_radius),
            np.full(n, self.theta0[element]),
            np.full(n, self.delta[element]),
            points,
        )
        return np.clip(xhat, 0.0, 1.0), point_weights

    @staticmethod
    def _ray_hits(corners, arc_radius, direction, rel) -> np.ndarray:
        """Distances along rays from the origin to each element edge, NaN if missed."""
        hits = np.full((len(direction), 3), np.nan)
        for j in range(3):
            p, q = corners[(j + 1) % 3], corners[(j + 2) % 3]
            if j == 0 and arc_radius > 0:
                start = np.arctan2(p[1], p[0])
                sweep = rel(np.arctan2(q[1], q[0])) - rel(start)
                offset = rel(np.arctan2(direction[:, 1], direction[:, 0])) - rel(start)
                inside = (offset * sweep >= -REFERENCE_TOLERANCE) & (
                    np.abs(offset) <= np.abs(sweep) + REFERENCE_TOLERANCE
                )
                hits[inside, j] = arc_radius
                continue
            e = q - p
            det = -direction[:, 0] * e[1] + e[0] * direction[:, 1]
            valid = np.abs(det) > 1e-14
            safe = np.where(valid, det, 1.0)
            s = (-p[0] * e[1] + e[0] * p[1]) / safe
            lam = (direction[:, 0] * p[1] - direction[:, 1] * p[0]) / safe
            valid &= (lam >= -REFERENCE_TOLERANCE) & (lam <= 1 + REFERENCE_TOLERANCE)
            valid &= s >= -REFERENCE_TOLERANCE
            hits[valid, j] = s[valid]
        return hits

    def locate(self, points) -> Tuple[np.ndarray, np.ndarray]:
        """Find the element and reference coordinates of physical points.

        Args:
            points: Physical points, shape `(2,)` or `(n, 2)`.

        Returns:
            Tuple[np.ndarray, np.ndarray]: Element index per point and
            reference coordinates of shape `(n, 2)`.

        Raises:
            ValueError: If a point lies outside the unit disk.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        radius = np.linalg.norm(points, axis=1)
        if np.any(radius > 1.0 + REFERENCE_TOLERANCE):
            raise ValueError(
                f"Invalid point outside the unit disk: {points[np.argmax(radius)].tolist()}"
            )
        if self._tree is None:
            self._tree = cKDTree(self.vertices[self.triangles].mean(axis=1))
        n_candidates = min(8, self.n_triangles)
        _, candidates = self._tree.query(points, k=n_candidates)
        candidates = np.asarray(candidates).reshape(len(points), n_candidates)

        elements = np.full(len(points), -1, dtype=np.int64)
        xhat = np.zeros((len(points), 2))
        for rank in range(n_candidates):
            todo = np.flatnonzero(elements < 0)
            if not len(todo):
                break
            self._try_elements(points, todo, candidates[todo, rank], elements, xhat)
        for idx in np.flatnonzero(elements < 0):
            for k in range(self.n_triangles):
                self._try_elements(points, np.array([idx]), np.array([k]), elements, xhat)
                if elements[idx] >= 0:
                    break
            else:
                raise ValueError(f"Invalid point, no element found: {points[idx].tolist()}")
        return elements, xhat

    def _try_elements(self, points, todo, trial, elements, xhat):
        ref = _newton(
            self.vertices[self.triangles[trial]],
            self.element_radius[trial],
            self.theta0[trial],
            self.delta[trial],
            points[todo],
        )
        inside = (
            (ref[:, 0] >= -LOCATE_TOLERANCE)
            & (ref[:, 1] >= -LOCATE_TOLERANCE)
            & (ref.sum(axis=1) <= 1.0 + LOCATE_TOLERANCE)
        )
        elements[todo[inside]] = trial[inside]
        xhat[todo[inside]] = np.clip(ref[inside], 0.0, 1.0)


def build_coarse_disk_mesh(n_fan: int, interface_radius: Optional[float] = None) -> Mesh:
    """Fan triangulation of the unit disk around the origin.

    ```python
    >>> mesh = build_coarse_disk_mesh(4)
    >>> mesh.n_vertices, mesh.n_triangles, mesh.n_edges, int(mesh.boundary.sum())
    (5, 4, 8, 4)
    ```

    Args:
        n_fan (int): Number of fan triangles, at least 3.
        interface_radius (float, optional): If given, the fan ends on the
            circle of this radius and a ring of `2 n_fan` triangles fills the
            annulus up to the unit circle; the interface edges are arcs.

    Returns:
        Mesh: Level 0 mesh.

    Raises:
        ValueError: If `n_fan < 3` or the radius is not in (0, 1).
    """
    if n_fan < 3:
        raise ValueError(f"Invalid fan size: {n_fan} (at least 3 triangles)")
    angles = 2.0 * np.pi * np.arange(n_fan) / n_fan
    rim = np.column_stack([np.cos(angles), np.sin(angles)])
    nxt = (np.arange(n_fan) + 1) % n_fan

    if interface_radius is None:
        vertices = np.vstack([[0.0, 0.0], rim])
        triangles = np.column_stack([np.zeros(n_fan, dtype=int), 1 + np.arange(n_fan), 1 + nxt])
        arcs = {(1 + k, 1 + int(nxt[k])): 1.0 for k in range(n_fan)}
        return Mesh(vertices, triangles, arcs)

    if not 0.0 < interface_radius < 1.0:
        raise ValueError(f"Invalid interface radius: {interface_radius}")
    vertices = np.vstack([[0.0, 0.0], interface_radius * rim, rim])
    inner, outer = 1 + np.arange(n_fan), 1 + n_fan + np.arange(n_fan)
    triangles: List[Tuple[int, int, int]] = []
    arcs: Dict[Tuple[int, int], float] = {}
    for k in range(n_fan):
        a, a_next = int(inner[k]), int(inner[nxt[k]])
        b, b_next = int(outer[k]), int(outer[nxt[k]])
        triangles += [(0, a, a_next), (a, b, b_next), (a, b_next, a_next)]
        arcs[(a, a_next)] = float(interface_radius)
        arcs[(b, b_next)] = 1.0
    return Mesh(vertices, triangles, arcs)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four at its edge midpoints.

    Midpoints of curved edges are projected radially onto the edge's circle
    and both halves stay curved.

    Args:
        mesh (Mesh): Mesh to refine.

    Returns:
        Mesh: Refined mesh, one level deeper.
    """
    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    mids = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
    curved = mesh.edge_radius > 0
    mids[curved] *= (mesh.edge_radius[curved] / np.linalg.norm(mids[curved], axis=1))[:, None]
    vertices = np.vstack([mesh.vertices, mids])

    v0, v1, v2 = mesh.triangles.T
    m0, m1, m2 = (mesh.n_vertices + mesh.tri_edges).T
    children = np.stack(
        [
            np.column_stack([v0, m2, m1]),
            np.column_stack([m2, v1, m0]),
            np.column_stack([m1, m0, v2]),
            np.column_stack([m0, m1, m2]),
        ],
        axis=1,
    ).reshape(-1, 3)

    arcs: Dict[Tuple[int, int], float] = {}
    for e in np.flatnonzero(curved):
        mid = mesh.n_vertices + int(e)
        arcs[(int(a[e]), mid)] = float(mesh.edge_radius[e])
        arcs[(int(b[e]), mid)] = float(mesh.edge_radius[e])
    return Mesh(vertices, children, arcs, level=mesh.level + 1)


def mesh_hierarchy(
    n_fan: int, levels: int, interface_radius: Optional[float] = None
) -> List[Mesh]:
    """Coarse fan mesh and its first `levels - 1` uniform refinements."""
    if levels < 1:
        raise ValueError(f"Invalid number of levels: {levels}")
    meshes = [build_coarse_disk_mesh(n_fan, interface_radius)]
    for _ in range(levels - 1):
        meshes.append(refine_uniform(meshes[-1]))
    return meshes


def write_mesh(mesh: Mesh, path: Union[str, Path]) -> Path:
    """Dump a mesh as `v x y`, `t a b c` and `b a b` records, one per line."""
    path = Path(path)
    lines = [f"v {x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [f"t {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    lines += [f"b {a} {b}" for a, b in mesh.edges[mesh.boundary].tolist()]
    path.write_text("\n".join(lines) + "\n")
    return path
