"""Least squares finite elements for -Laplace(u) + gamma u = f on the unit disk.

`fosls` discretizes the first order system `div phi + gamma u = f`,
`grad u + phi = 0` with Raviart-Thomas or Brezzi-Douglas-Marini fluxes and
Lagrange scalars on exactly curved meshes of the disk, and measures the
convergence orders of the least squares solution.

```python
>>> import fosls
>>> mesh = fosls.build_coarse_disk_mesh(6)
>>> case = fosls.smooth_case(gamma=1.0)
>>> config = fosls.ProblemConfig(p_s=2, p_v=2, family="RT")
>>> solution = fosls.solve(fosls.assemble(mesh, config, case.f))
>>> fosls.compute_errors(solution, case).err_u
0.38...
```

"""

# SPDX-FileCopyrightText: 2024-present Will <wahubsch@gmail.com>
#
# SPDX-License-Identifier: MIT

from . import resources
from .cases import dirichlet_case, get_case, indicator_case, ode_reference, smooth_case
from .fosls import SolutionPair, SolverError, assemble, evaluate, solve
from .mesh import Mesh, build_coarse_disk_mesh, mesh_hierarchy, refine_uniform
from .metrics import compute_errors, convergence_report, eoc, write_csv
from .objects import (
    BoundaryMode,
    Family,
    ManufacturedCase,
    ProblemConfig,
    ScalarSpaceSpec,
    StudyConfig,
    VectorSpaceSpec,
)
from .projection import apply_ih, curl_matrix, helmholtz_split
from .quadrature import triangle_rule
from .spaces import FunctionSpace, build_dof_map, eval_scalar_basis, eval_vector_basis
from .study import best_rates, predicted_rates, run_study

__all__ = [
    "build_coarse_disk_mesh",
    "refine_uniform",
    "mesh_hierarchy",
    "Mesh",
    "triangle_rule",
    "eval_scalar_basis",
    "eval_vector_basis",
    "build_dof_map",
    "FunctionSpace",
    "assemble",
    "solve",
    "evaluate",
    "SolutionPair",
    "SolverError",
    "compute_errors",
    "convergence_report",
    "eoc",
    "write_csv",
    "apply_ih",
    "curl_matrix",
    "helmholtz_split",
    "smooth_case",
    "indicator_case",
    "dirichlet_case",
    "get_case",
    "ode_reference",
    "predicted_rates",
    "best_rates",
    "run_study",
    "BoundaryMode",
    "Family",
    "ManufacturedCase",
    "ProblemConfig",
    "ScalarSpaceSpec",
    "StudyConfig",
    "VectorSpaceSpec",
    "resources",
]
