"""Shifted-boundary finite element solver for the 2D Poisson problem."""

from .geometry import (
    DistanceSample,
    DomainSpec,
    ExactSolution,
    GeometryError,
    Sideset,
    assign_sideset,
    bind_dirichlet,
    closest_point,
    distance_vector,
    domain_by_name,
    make_affine_solution,
    make_corner_domain,
    make_corner_solution,
    make_disk_domain,
    make_sinsin_solution,
    make_square_domain,
    solution_by_name,
)
from .mesh import (
    MeshError,
    ShiftConfig,
    TriMesh,
    build_background,
    mesh_params,
    restrict_to_domain,
    shift_boundary_nodes,
    write_vtk,
)
from .assembly import (
    AssemblyError,
    BoundaryQuadrature,
    SparseSystem,
    apply_form,
    assemble,
    build_boundary_quadrature,
    shift_eval,
    write_matrixmarket,
)
from .linsolve import SolveError, SolveReport, solve
from .analysis import (
    ErrorReport,
    RateTable,
    coercivity_estimate,
    energy_norm,
    error_norms,
    error_report,
    fit_rates,
    nonsymmetry_residual,
    remainder_norm,
)

__version__ = "0.1.0"
