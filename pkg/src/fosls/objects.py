"""Define value objects, configurations and reports."""

from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

import numpy as np
import regex
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .resources import (
    CG_MAX_ITERATIONS,
    CG_TOLERANCE,
    DEFAULT_GAMMA,
    DESK_DOF_LIMIT,
    DIRECT_SOLVER_LIMIT,
    MAX_POTENTIAL_DEGREE,
    MAX_QUADRATURE_DEGREE,
    MAX_SCALAR_DEGREE,
    MAX_VECTOR_DEGREE,
)

Point2 = np.ndarray
"""A physical or reference point, shape `(2,)`; batches are `(n, 2)` arrays."""

Field2D = Callable[[np.ndarray, np.ndarray], np.ndarray]
"""A field evaluated on coordinate arrays `x`, `y` of equal shape."""


class Family(str, Enum):
    """H(div) element family."""

    RT = "RT"
    BDM = "BDM"


class ScalarBC(str, Enum):
    """Boundary condition built into a Lagrange space."""

    NONE = "none"
    ZERO_TRACE = "zero-trace"


class VectorBC(str, Enum):
    """Boundary condition built into an H(div) space."""

    NONE = "none"
    ZERO_NORMAL_TRACE = "zero-normal-trace"


class BoundaryMode(str, Enum):
    """Homogeneous boundary condition of the model problem."""

    NEUMANN = "neumann"
    DIRICHLET = "dirichlet"


class CaseName(str, Enum):
    """Manufactured experiments known to the study harness."""

    SMOOTH = "smooth"
    INDICATOR = "indicator"
    DIRICHLET_SMOKE = "dirichlet-smoke"


class Pairing(str, Enum):
    """How degree ranges are combined into (p_s, p_v) pairs."""

    GRID = "grid"
    DIAGONAL = "diagonal"


def parse_degrees(value: Union[str, int, List[int]]) -> List[int]:
    """Expand a degree expression into a sorted list.

    ```python
    >>> parse_degrees("1-3")
    [1, 2, 3]
    >>> parse_degrees("1,2,4")
    [1, 2, 4]
    >>> parse_degrees(2)
    [2]
    ```

    Args:
        value: An integer, a list of integers, or a string of comma separated
            integers and `a-b` ranges.

    Returns:
        List[int]: Sorted, deduplicated degrees.

    Raises:
        ValueError: If the expression cannot be parsed.
    """
    if isinstance(value, int):
        return [value]
    if isinstance(value, (list, tuple)):
        return sorted({int(v) for v in value})
    degrees = set()
    for part in str(value).split(","):
        match = regex.fullmatch(r"\s*(\d+)\s*(?:-\s*(\d+)\s*)?", part)
        if not match:
            raise ValueError(f"Invalid degree expression: {value}")
        low = int(match.group(1))
        high = int(match.group(2) or low)
        if high < low:
            raise ValueError(f"Invalid degree expression: {value}")
        degrees.update(range(low, high + 1))
    return sorted(degrees)


class QuadratureRule(BaseModel):
    """Quadrature rule on the reference triangle (0,0), (1,0), (0,1)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    degree: int = Field(
        ge=1, le=MAX_QUADRATURE_DEGREE, description="Polynomial exactness degree."
    )
    nodes: np.ndarray = Field(description="Nodes, shape (n, 2).")
    weights: np.ndarray = Field(description="Positive weights summing to 1/2.")

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Contract the last axis of `values` with the weights."""
        return np.asarray(values) @ self.weights


class ScalarSpaceSpec(BaseModel):
    """Lagrange space S_p of degree `p_s`."""

    model_config = ConfigDict(frozen=True)

    p_s: int = Field(ge=1, le=MAX_POTENTIAL_DEGREE, description="Polynomial degree.")
    bc: ScalarBC = Field(default=ScalarBC.NONE, description="Built-in boundary condition.")


class VectorSpaceSpec(BaseModel):
    """H(div) space RT_{p_v - 1} or BDM_{p_v}."""

    model_config = ConfigDict(frozen=True)

    family: Family = Field(default=Family.RT, description="Element family.")
    p_v: int = Field(ge=1, le=MAX_VECTOR_DEGREE, description="Vector degree.")
    bc: VectorBC = Field(default=VectorBC.NONE, description="Built-in boundary condition.")

    @property
    def edge_moments(self) -> int:
        """Number of normal moments per edge."""
        return self.p_v if self.family is Family.RT else self.p_v + 1

    @property
    def dimension(self) -> int:
        """Local dimension of the reference space."""
        if self.family is Family.RT:
            return self.p_v * (self.p_v + 2)
        return (self.p_v + 1) * (self.p_v + 2)


class BasisEval(BaseModel):
    """Reference shape functions tabulated at a batch of points."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray = Field(description="(n_points, n_basis) or (n_points, n_basis, 2).")
    gradients: Optional[np.ndarray] = Field(
        default=None, description="Reference gradients, (n_points, n_basis, 2)."
    )
    divergence: Optional[np.ndarray] = Field(
        default=None, description="Reference divergences, (n_points, n_basis)."
    )


class DofMap(BaseModel):
    """Local-to-global numbering of a finite element space."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    cells: np.ndarray = Field(description="Global index per element and local DOF.")
    signs: np.ndarray = Field(description="Orientation sign per element and local DOF.")
    constrained: np.ndarray = Field(description="Boolean mask of boundary-constrained DOFs.")
    n_dofs: int = Field(ge=0, description="Total number of global DOFs.")

    @property
    def free(self) -> np.ndarray:
        """Indices of unconstrained DOFs."""
        return np.flatnonzero(~self.constrained)

    @property
    def n_free(self) -> int:
        """Number of unconstrained DOFs."""
        return int(np.count_nonzero(~self.constrained))


class ProblemConfig(BaseModel):
    """Discretization of -Laplace(u) + gamma u = f by first order least squares."""

    model_config = ConfigDict(frozen=True)

    gamma: float = Field(default=DEFAULT_GAMMA, gt=0, description="Reaction coefficient.")
    bc_mode: BoundaryMode = Field(default=BoundaryMode.NEUMANN)
    family: Family = Field(default=Family.RT)
    p_s: int = Field(default=1, ge=1, le=MAX_SCALAR_DEGREE)
    p_v: int = Field(default=1, ge=1, le=MAX_VECTOR_DEGREE)
    assembly_degree: Optional[int] = Field(default=None, ge=1, le=MAX_QUADRATURE_DEGREE)
    error_degree: Optional[int] = Field(default=None, ge=1, le=MAX_QUADRATURE_DEGREE)
    direct_solver_limit: int = Field(default=DIRECT_SOLVER_LIMIT, ge=0)
    cg_tolerance: float = Field(default=CG_TOLERANCE, gt=0)
    cg_max_iterations: int = Field(default=CG_MAX_ITERATIONS, ge=1)
    cg_fallback: bool = Field(
        default=True, description="Factorize directly when conjugate gradients stop early."
    )

    @property
    def scalar_spec(self) -> ScalarSpaceSpec:
        """Scalar space; zero trace in Dirichlet mode."""
        bc = ScalarBC.ZERO_TRACE if self.bc_mode is BoundaryMode.DIRICHLET else ScalarBC.NONE
        return ScalarSpaceSpec(p_s=self.p_s, bc=bc)

    @property
    def vector_spec(self) -> VectorSpaceSpec:
        """Vector space; zero normal trace in Neumann mode."""
        bc = (
            VectorBC.ZERO_NORMAL_TRACE
            if self.bc_mode is BoundaryMode.NEUMANN
            else VectorBC.NONE
        )
        return VectorSpaceSpec(family=self.family, p_v=self.p_v, bc=bc)

    @property
    def quadrature_degree(self) -> int:
        """Assembly quadrature degree, 2 (max(p_s, p_v) + 3) unless set."""
        return self.assembly_degree or 2 * (max(self.p_s, self.p_v) + 3)

    @property
    def error_quadrature_degree(self) -> int:
        """Error integration degree, 2 (max(p_s, p_v) + 5) unless set."""
        return self.error_degree or min(
            2 * (max(self.p_s, self.p_v) + 5), MAX_QUADRATURE_DEGREE
        )


class ManufacturedCase(BaseModel):
    """Exact solution bundle of the model problem."""

    model_config = ConfigDict(frozen=True)

    name: str
    gamma: float = Field(gt=0)
    regularity: float = Field(gt=0, description="Sobolev index s of f; inf if smooth.")
    bc_mode: BoundaryMode
    u: Field2D
    grad_u: Field2D
    f: Field2D
    interface_radius: Optional[float] = Field(
        default=None, gt=0, lt=1, description="Circle carrying a jump of f, if any."
    )

    def phi(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Flux phi = -grad u."""
        return -self.grad_u(x, y)

    def div_phi(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Divergence of the flux, f - gamma u."""
        return self.f(x, y) - self.gamma * self.u(x, y)


class ErrorReport(BaseModel):
    """Errors of one discrete solution."""

    model_config = ConfigDict(frozen=True)

    level: int = Field(ge=0)
    h: float = Field(gt=0)
    dof_total: int = Field(ge=0)
    dof_u: int = Field(ge=0)
    dof_phi: int = Field(ge=0)
    err_u: float = Field(ge=0)
    err_gradu: float = Field(ge=0)
    err_phi: float = Field(ge=0)
    err_divphi: float = Field(ge=0)
    err_b: float = Field(ge=0)
    err_b_div: float = Field(ge=0, description="||div e_phi + gamma e_u||")
    err_b_grad: float = Field(ge=0, description="||grad e_u + e_phi||")


class ConvergenceReport(BaseModel):
    """Errors over a level sequence with estimated orders of convergence."""

    model_config = ConfigDict(frozen=True)

    reports: List[ErrorReport]
    eocs: Dict[str, List[float]] = Field(
        description="EOC sequence per ErrorReport error field, between consecutive levels."
    )


class RateTriple(BaseModel):
    """Convergence rates of ||e_u||, ||grad e_u|| and ||e_phi||."""

    model_config = ConfigDict(frozen=True)

    u: float
    gradu: float
    phi: float


class StudyConfig(BaseModel):
    """Convergence study over levels and degree combinations."""

    model_config = ConfigDict(frozen=True)

    case: CaseName = Field(default=CaseName.SMOOTH)
    gamma: float = Field(default=DEFAULT_GAMMA, gt=0)
    family: Family = Field(default=Family.RT)
    ps: List[int] = Field(default=[1, 2, 3], description="Scalar degrees.")
    pv: List[int] = Field(default=[1, 2, 3], description="Vector degrees.")
    levels: int = Field(default=5, ge=2, description="Number of mesh levels.")
    n_fan: int = Field(default=6, ge=3, description="Triangles of the coarse fan.")
    fitted_interface: bool = Field(
        default=False,
        description="Align the meshes with the jump of f instead of splitting cut elements.",
    )
    output: Path = Field(default=Path("fosls-out"))
    pairing: Pairing = Field(default=Pairing.GRID)
    expected_rates: bool = Field(default=True, description="Write the rates table.")
    force: bool = Field(default=False, description="Ignore the desk-scale DOF limit.")
    max_dofs: int = Field(default=DESK_DOF_LIMIT, ge=1)
    jobs: int = Field(default=1, ge=1)

    @field_validator("ps", "pv", mode="before")
    @classmethod
    def _expand(cls, value):
        return parse_degrees(value)

    @field_validator("ps")
    @classmethod
    def _scalar_range(cls, value: List[int]) -> List[int]:
        if not value or min(value) < 1 or max(value) > MAX_SCALAR_DEGREE:
            raise ValueError(f"Scalar degrees must lie in 1-{MAX_SCALAR_DEGREE}: {value}")
        return value

    @field_validator("pv")
    @classmethod
    def _vector_range(cls, value: List[int]) -> List[int]:
        if not value or min(value) < 1 or max(value) > MAX_VECTOR_DEGREE:
            raise ValueError(f"Vector degrees must lie in 1-{MAX_VECTOR_DEGREE}: {value}")
        return value

    @model_validator(mode="after")
    def _diagonal_overlap(self) -> "StudyConfig":
        if self.pairing is Pairing.DIAGONAL and not set(self.ps) & set(self.pv):
            raise ValueError("Diagonal pairing needs at least one common degree")
        return self

    @property
    def combinations(self) -> List[tuple]:
        """(p_s, p_v) pairs in run order."""
        if self.pairing is Pairing.DIAGONAL:
            return [(p, p) for p in self.ps if p in self.pv]
        return [(p_s, p_v) for p_s in self.ps for p_v in self.pv]


class SummaryRow(BaseModel):
    """Observed against predicted rate of one norm of one combination."""

    model_config = ConfigDict(frozen=True)

    case: str
    family: Family
    ps: int
    pv: int
    norm: str = Field(description="One of `u`, `gradu`, `phi`.")
    predicted: float
    observed: float = Field(description="Last-interval EOC; NaN if unavailable.")
    verdict: str = Field(description="`PASS`, `FAIL` or `ERROR`.")


class CombinationResult(BaseModel):
    """Outcome of the level sequence of one (p_s, p_v) pair."""

    model_config = ConfigDict(frozen=True)

    ps: int
    pv: int
    report: Optional[ConvergenceReport] = None
    error: Optional[str] = Field(default=None, description="Reason of an aborted run.")
    rows: List[SummaryRow] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        """Whether every rated norm passed."""
        return bool(self.rows) and all(row.verdict == "PASS" for row in self.rows)
