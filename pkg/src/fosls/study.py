"""Convergence studies over mesh levels and degree combinations.

```
fosls-study --case smooth --family RT --ps 1-3 --pv 1-3 --levels 5 --out results
fosls-study --config study.toml --jobs 4 -v
```

A study writes, into its output directory, one CSV table and one SVG chart
per rated norm for every (p_s, p_v) pair, a `summary.csv` comparing the last
EOC with the predicted rate, and optionally `rates.csv`. Exit codes: 0 if
every rated norm passes, 1 if any fails or errors, 2 for invalid
configurations.
"""

import argparse
import logging
import math
import sys
import tomllib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import matplotlib
import numpy as np
import pandas as pd
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure
from pydantic import ValidationError

from .__about__ import __version__
from .cases import get_case
from .fosls import assemble, solve
from .mesh import build_coarse_disk_mesh, mesh_hierarchy
from .metrics import compute_errors, convergence_report, write_csv
from .objects import (
    BoundaryMode,
    CombinationResult,
    ConvergenceReport,
    Family,
    ManufacturedCase,
    ProblemConfig,
    RateTriple,
    StudyConfig,
    SummaryRow,
    VectorSpaceSpec,
)
from .resources import EOC_SLACK, NORM_LABELS, RATED_NORMS, RATES_HEADER, SUMMARY_HEADER

_LOGGER = logging.getLogger(__name__)


class StudyConfigError(ValueError):
    """A study configuration that cannot or must not be run."""


def predicted_rates(s: float, p_s: int, p_v: int, family: Family) -> RateTriple:
    """Guaranteed convergence rates for a right-hand side of regularity `s`.

    ```python
    >>> predicted_rates(float("inf"), 3, 2, Family.RT)
    RateTriple(u=4.0, gradu=3.0, phi=2.0)
    >>> predicted_rates(0.5, 4, 4, Family.BDM)
    RateTriple(u=2.5, gradu=1.5, phi=1.5)
    ```

    Args:
        s (float): Sobolev regularity of f, `inf` for smooth data.
        p_s (int): Scalar degree.
        p_v (int): Vector degree.
        family (Family): RT or BDM.

    Returns:
        RateTriple: Rates of `||e_u||`, `||grad e_u||` and `||e_phi||`.
    """
    common = min(s + 1, p_s, p_v + 1)
    u = min(s + 1, 2) if p_v == 1 else common + 1
    flux_degree = p_v if Family(family) is Family.RT else p_v + 1
    return RateTriple(u=u, gradu=common, phi=min(s + 1, p_s + 1, flux_degree))


def best_rates(s: float, p_s: int, p_v: int, family: Family) -> RateTriple:
    """Best-approximation rates of the discrete spaces for regularity `s`."""
    flux_degree = p_v if Family(family) is Family.RT else p_v + 1
    return RateTriple(
        u=min(s + 1, p_s) + 1, gradu=min(s + 1, p_s), phi=min(s + 1, flux_degree)
    )


def verdict(observed: float, predicted: float) -> str:
    """`PASS` iff the observed rate is at least the predicted one minus the slack."""
    if not math.isfinite(observed):
        return "FAIL"
    return "PASS" if observed >= predicted - EOC_SLACK else "FAIL"


def estimate_dofs(config: StudyConfig, p_s: int, p_v: int) -> int:
    """Free DOFs on the finest level, from the coarse mesh and Euler counts."""
    case = get_case(config.case, config.gamma)
    coarse = build_coarse_disk_mesh(config.n_fan, _mesh_radius(config, case))
    v, e, t, b = coarse.n_vertices, coarse.n_edges, coarse.n_triangles, int(coarse.boundary.sum())
    for _ in range(config.levels - 1):
        v, e, t, b = v + e, 2 * e + 3 * t, 4 * t, 2 * b
    spec = VectorSpaceSpec(family=config.family, p_v=p_v)
    scalar = v + e * (p_s - 1) + t * (p_s - 1) * (p_s - 2) // 2
    vector = e * spec.edge_moments + t * (spec.dimension - 3 * spec.edge_moments)
    if case.bc_mode is BoundaryMode.DIRICHLET:
        scalar -= b * p_s
    else:
        vector -= b * spec.edge_moments
    return scalar + vector


def _mesh_radius(config: StudyConfig, case: ManufacturedCase) -> Optional[float]:
    return case.interface_radius if config.fitted_interface else None


def _stem(config: StudyConfig, p_s: int, p_v: int) -> str:
    return f"{config.case.value}_{config.family.value}_ps{p_s}_pv{p_v}"


def plot_convergence(
    report: ConvergenceReport,
    norm: str,
    predicted: float,
    best: float,
    path: Path,
    title: str = "",
) -> Path:
    """Log-log chart of one error norm against h and against sqrt(DOF).

    The guaranteed rate is drawn as a black reference line, the
    best-approximation rate in blue, both anchored at the finest level.
    """
    matplotlib.rcParams["svg.hashsalt"] = "fosls"
    errors = np.array([getattr(r, RATED_NORMS[norm]) for r in report.reports])
    h = np.array([r.h for r in report.reports])
    sqrt_dofs = np.sqrt([r.dof_total for r in report.reports])

    fig = Figure(figsize=(9, 4))
    FigureCanvasSVG(fig)
    axes = fig.subplots(1, 2)
    for ax, x, sign, label in (
        (axes[0], h, 1.0, "$h$"),
        (axes[1], sqrt_dofs, -1.0, r"$\sqrt{\mathrm{DOF}}$"),
    ):
        ax.loglog(x, errors, "o-", label=NORM_LABELS[norm])
        for rate, style, name in ((predicted, "k--", "guaranteed"), (best, "b:", "best")):
            if math.isfinite(rate):
                ref = errors[-1] * (x / x[-1]) ** (sign * rate)
                ax.loglog(x, ref, style, linewidth=0.8, label=f"{name} {rate:g}")
        ax.set_xlabel(label)
        ax.grid(True, alpha=0.3, which="both")
        ax.legend(fontsize=7)
    axes[0].set_ylabel("error")
    fig.suptitle(title)
    fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def run_combination(config: StudyConfig, p_s: int, p_v: int) -> CombinationResult:
    """Run the level sequence of one degree pair and write its files.

    Failures are caught and reported as an `ERROR` result.
    """
    case = get_case(config.case, config.gamma)
    s = case.regularity
    predicted = predicted_rates(s, p_s, p_v, config.family)
    best = best_rates(s, p_s, p_v, config.family)
    try:
        problem = ProblemConfig(
            gamma=config.gamma, bc_mode=case.bc_mode, family=config.family, p_s=p_s, p_v=p_v
        )
        reports = []
        meshes = mesh_hierarchy(config.n_fan, config.levels, _mesh_radius(config, case))
        for mesh in meshes:
            system = assemble(mesh, problem, case.f, interface_radius=case.interface_radius)
            solution = solve(system)
            reports.append(compute_errors(solution, case, problem))
            _LOGGER.info(
                "%s p_s=%d p_v=%d level %d: h=%.4f dofs=%d err_u=%.3e",
                config.family.value,
                p_s,
                p_v,
                mesh.level,
                mesh.h,
                reports[-1].dof_total,
                reports[-1].err_u,
            )
        report = convergence_report(reports)
    except Exception as err:  # noqa: BLE001
        _LOGGER.error("Combination p_s=%d p_v=%d failed: %s", p_s, p_v, err)
        rows = [
            SummaryRow(
                case=case.name,
                family=config.family,
                ps=p_s,
                pv=p_v,
                norm=norm,
                predicted=getattr(predicted, norm),
                observed=float("nan"),
                verdict="ERROR",
            )
            for norm in RATED_NORMS
        ]
        return CombinationResult(ps=p_s, pv=p_v, error=str(err), rows=rows)

    stem = _stem(config, p_s, p_v)
    write_csv(report, config.output / f"{stem}.csv")
    rows = []
    for norm, field in RATED_NORMS.items():
        observed = report.eocs[field][-1]
        rows.append(
            SummaryRow(
                case=case.name,
                family=config.family,
                ps=p_s,
                pv=p_v,
                norm=norm,
                predicted=getattr(predicted, norm),
                observed=observed,
                verdict=verdict(observed, getattr(predicted, norm)),
            )
        )
        plot_convergence(
            report,
            norm,
            getattr(predicted, norm),
            getattr(best, norm),
            config.output / f"{stem}_{norm}.svg",
            title=f"{case.name}, {config.family.value}, $p_s={p_s}$, $p_v={p_v}$",
        )
    _LOGGER.info(
        "p_s=%d p_v=%d EOC u=%.2f gradu=%.2f phi=%.2f",
        p_s,
        p_v,
        *(row.observed for row in rows),
    )
    return CombinationResult(ps=p_s, pv=p_v, report=report, rows=rows)


def _run_pair(args):
    return run_combination(*args)


def run_study(config: StudyConfig) -> List[CombinationResult]:
    """Run every degree combination of a study and write all files.

    Args:
        config (StudyConfig): Validated study configuration.

    Returns:
        List[CombinationResult]: One result per (p_s, p_v) pair in run order.

    Raises:
        StudyConfigError: If the finest level of some pair exceeds the DOF
            limit and `force` is not set.
    """
    combinations = config.combinations
    if not config.force:
        for p_s, p_v in combinations:
            dofs = estimate_dofs(config, p_s, p_v)
            if dofs > config.max_dofs:
                raise StudyConfigError(
                    f"Invalid study size: p_s={p_s} p_v={p_v} needs {dofs} DOFs "
                    f"on the finest level (limit {config.max_dofs}, use --force)"
                )
    config.output.mkdir(parents=True, exist_ok=True)
    _LOGGER.info("Running %d combinations into %s", len(combinations), config.output)

    tasks = [(config, p_s, p_v) for p_s, p_v in combinations]
    if config.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_run_pair, tasks))
    else:
        results = [_run_pair(task) for task in tasks]

    write_summary(results, config.output / "summary.csv")
    if config.expected_rates:
        write_rates(config, config.output / "rates.csv")
    return results


def write_summary(results: Sequence[CombinationResult], path: Path) -> Path:
    """Write `case,family,ps,pv,norm,predicted,observed,verdict` rows."""
    rows = [row.model_dump(mode="json") for result in results for row in result.rows]
    pd.DataFrame(rows, columns=SUMMARY_HEADER).to_csv(path, index=False, na_rep="")
    return path


def write_rates(config: StudyConfig, path: Path) -> Path:
    """Write the guaranteed and best-approximation rate of every rated norm."""
    s = get_case(config.case, config.gamma).regularity
    rows = []
    for p_s, p_v in config.combinations:
        predicted = predicted_rates(s, p_s, p_v, config.family)
        best = best_rates(s, p_s, p_v, config.family)
        for norm in RATED_NORMS:
            rows.append(
                {
                    "family": config.family.value,
                    "ps": p_s,
                    "pv": p_v,
                    "norm": norm,
                    "predicted": getattr(predicted, norm),
                    "best": getattr(best, norm),
                }
            )
    pd.DataFrame(rows, columns=RATES_HEADER).to_csv(path, index=False)
    return path


def load_config(path: Path) -> Dict[str, Any]:
    """Read the `[study]` table of a TOML manifest.

    Raises:
        StudyConfigError: If the file cannot be read or parsed.
    """
    try:
        with open(path, "rb") as handle:
            data = tomllib.load(handle)
    except (OSError, tomllib.TOMLDecodeError) as err:
        raise StudyConfigError(f"Invalid config file {path}: {err}") from err
    table = data.get("study", data)
    if not isinstance(table, dict):
        raise StudyConfigError(f"Invalid config file {path}: [study] must be a table")
    return dict(table)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fosls-study",
        description="Convergence studies of least squares finite elements on the unit disk.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, help="TOML manifest with a [study] table")
    parser.add_argument("--case", choices=["smooth", "indicator", "dirichlet-smoke"])
    parser.add_argument("--family", choices=["RT", "BDM"])
    parser.add_argument("--ps", help="scalar degrees, e.g. 2, 1-3 or 1,3")
    parser.add_argument("--pv", help="vector degrees, e.g. 2, 1-3 or 1,3")
    parser.add_argument("--levels", type=int, help="number of mesh levels")
    parser.add_argument("--gamma", type=float, help="reaction coefficient")
    parser.add_argument("--n-fan", dest="n_fan", type=int, help="triangles of the coarse fan")
    parser.add_argument("--out", dest="output", type=Path, help="output directory")
    parser.add_argument("--pairing", choices=["grid", "diagonal"])
    parser.add_argument("--jobs", type=int, help="parallel worker processes")
    parser.add_argument(
        "--no-expected-rates",
        dest="expected_rates",
        action="store_const",
        const=False,
        help="skip rates.csv",
    )
    parser.add_argument(
        "--fitted-interface",
        dest="fitted_interface",
        action="store_const",
        const=True,
        help="align the meshes with the jump of the indicator right-hand side",
    )
    parser.add_argument(
        "--force", action="store_const", const=True, help="ignore the desk-scale DOF limit"
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Command line entry point; returns the exit code."""
    args = _parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(
            level=logging.DEBUG if args.verbose > 1 else logging.INFO,
            format="%(asctime)s %(name)s %(levelname)s %(message)s",
        )
    try:
        settings = load_config(args.config) if args.config else {}
        overrides = {
            key: value
            for key, value in vars(args).items()
            if key not in ("config", "verbose") and value is not None
        }
        config = StudyConfig(**{**settings, **overrides})
        results = run_study(config)
    except (ValidationError, StudyConfigError) as err:
        print(f"fosls-study: {err}", file=sys.stderr)
        return 2

    for result in results:
        for row in result.rows:
            print(
                f"{row.case} {row.family.value} p_s={row.ps} p_v={row.pv} {row.norm:>5}: "
                f"predicted {row.predicted:g}, observed {row.observed:.2f} {row.verdict}"
            )
    return 0 if all(result.passed for result in results) else 1


if __name__ == "__main__":
    sys.exit(main())
