import numpy as np
import pytest

from sbmlab import assembly, geometry, linsolve, mesh


def make_problem(domain_name, solution_name, n, gamma=10.0, nq_edge=3):
    """Domain, solution, restricted mesh, boundary quadrature and system."""
    sol = geometry.solution_by_name(solution_name)
    dom = geometry.bind_dirichlet(geometry.domain_by_name(domain_name), sol)
    msh = mesh.restrict_to_domain(mesh.build_background(dom.bbox, n), dom)
    quad = assembly.build_boundary_quadrature(msh, dom, sol, nq_edge)
    system = assembly.assemble(msh, dom, sol, gamma, nq_edge, quad)
    return dom, sol, msh, quad, system


@pytest.fixture(scope="session")
def corner_problem():
    return make_problem("corner", "corner23", 12)


@pytest.fixture(scope="session")
def disk_problem():
    return make_problem("disk", "sinsin", 12)


@pytest.fixture(scope="session")
def fitted_square_problem():
    return make_problem("square", "sinsin", 8)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)


def solve_errors(dom, sol, msh, quad, system, tol=1e-10):
    from sbmlab import analysis

    rep = linsolve.solve(system, tol=tol)
    return rep, analysis.error_report(msh, quad, rep.solution, sol)
