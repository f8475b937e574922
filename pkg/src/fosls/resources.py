"""Hold constants and tables shared by the solver modules."""

MAX_QUADRATURE_DEGREE = 20
"""Highest exactness degree served by `fosls.quadrature.triangle_rule`."""

MAX_SCALAR_DEGREE = 5
"""Highest supported Lagrange degree `p_s`."""

MAX_VECTOR_DEGREE = 5
"""Highest supported H(div) degree `p_v`."""

MAX_POTENTIAL_DEGREE = MAX_VECTOR_DEGREE + 1
"""Highest Lagrange degree, reached by the curl potentials of BDM spaces."""

GEOMETRY_TOLERANCE = 1e-13
"""Allowed distance of boundary vertices and arc images from their circle."""

REFERENCE_TOLERANCE = 1e-12
"""Slack when testing membership of the closed reference triangle."""

LOCATE_TOLERANCE = 1e-10
"""Slack when deciding that a located point lies in an element."""

NEWTON_TOLERANCE = 1e-14
"""Stopping criterion of the Newton iteration inverting element maps."""

NEWTON_MAX_ITERATIONS = 30
"""Iteration cap of the Newton iteration inverting element maps."""

SPLIT_ANGULAR_POINTS = 20
"""Least Gauss points per angular piece of a split rule; straight edges give rational radii."""

DIRECT_SOLVER_LIMIT = 50_000
"""Free DOF count up to which the sparse direct solver is used."""

CG_TOLERANCE = 1e-12
"""Relative residual tolerance of the Jacobi-preconditioned CG solver."""

CG_MAX_ITERATIONS = 10_000
"""Iteration cap of the Jacobi-preconditioned CG solver."""

SOLVE_RESIDUAL_TOLERANCE = 1e-10
"""Accepted relative Galerkin residual of a solve."""

ASSEMBLY_CHUNK = 1024
"""Elements tabulated at once during assembly and error integration."""

DEFAULT_GAMMA = 1.0
"""Reaction coefficient used when none is configured."""

DEFAULT_INTERFACE_RADIUS = 0.5
"""Radius of the discontinuity of the indicator right-hand side."""

EOC_SLACK = 0.25
"""Allowed shortfall of an observed rate against the predicted one."""

DESK_DOF_LIMIT = 300_000
"""Largest finest-level DOF count a study runs without `--force`."""

CSV_HEADER = [
    "level",
    "h",
    "dof_total",
    "dof_u",
    "dof_phi",
    "err_u",
    "err_gradu",
    "err_phi",
    "err_divphi",
    "err_b",
    "eoc_u",
    "eoc_gradu",
    "eoc_phi",
]
"""Columns of the per-combination convergence table."""

SUMMARY_HEADER = ["case", "family", "ps", "pv", "norm", "predicted", "observed", "verdict"]
"""Columns of the study summary file."""

RATES_HEADER = ["family", "ps", "pv", "norm", "predicted", "best"]
"""Columns of the expected-rates table."""

RATED_NORMS = {"u": "err_u", "gradu": "err_gradu", "phi": "err_phi"}
"""Norms carrying a predicted rate, mapped to their ErrorReport field."""

NORM_LABELS = {
    "u": r"$\|e^u\|_{L^2}$",
    "gradu": r"$\|\nabla e^u\|_{L^2}$",
    "phi": r"$\|e^\varphi\|_{L^2}$",
}
"""Axis labels of the convergence charts."""
