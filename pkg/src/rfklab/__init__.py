"""Numerical laboratory for reverse Faber-Krahn inequalities of the Robin
Laplacian on doubly connected planar domains.

Submodules: geometry (domains), radial (annulus eigenvalues by shooting),
fem (2-D P1 eigensolver), parallels (interior-parallels test functions),
flow (gradient-flow basins and the effectless cut), harness (experiment
suites and reports).
"""

from .geometry import (
    AnnulusMatch,
    DomainSpec,
    RobinPair,
    StarBoundary,
    area,
    distance_to_boundary,
    load_domain,
    match_annulus,
    perimeter,
    save_domain,
)
from .radial import (
    RadialEigen,
    RadialProblem,
    SolverOptions,
    lambda1_radial,
    minimax_crossing,
    monotonicity_scan,
    sigma_of,
)

__all__ = [
    "AnnulusMatch", "DomainSpec", "RobinPair", "StarBoundary", "area",
    "distance_to_boundary", "load_domain", "match_annulus", "perimeter",
    "save_domain", "RadialEigen", "RadialProblem", "SolverOptions",
    "lambda1_radial", "minimax_crossing", "monotonicity_scan", "sigma_of",
]

__version__ = "0.1.0"
