import math

import numpy as np
import pytest
import scipy.linalg

from sbmlab import analysis as an
from sbmlab import geometry as geo
from sbmlab import linsolve
from sbmlab import mesh as msh
from sbmlab.assembly import build_boundary_quadrature
from conftest import make_problem


# ---------------------------------------------------------------------------
# error norms
# ---------------------------------------------------------------------------

def test_error_norms_affine_interpolant_is_exact(corner_problem):
    _, _, mesh_, _, _ = corner_problem
    sol = geo.make_affine_solution(0.2, -1.1, 0.6)
    interp = np.asarray(sol.eval(mesh_.vertices))
    l2, h1 = an.error_norms(mesh_, interp, sol)
    assert l2 <= 1e-12 and h1 <= 1e-12


def test_error_norms_constant_one():
    dom = geo.make_square_domain()
    mesh_ = msh.restrict_to_domain(msh.build_background(dom.bbox, 8), dom)
    sol = geo.make_affine_solution(1.0, 0.0, 0.0)
    l2, h1 = an.error_norms(mesh_, np.zeros(mesh_.num_vertices), sol)
    assert abs(l2 - 1.0) <= 1e-12
    assert h1 <= 1e-12


def test_interpolation_error_second_order():
    dom = geo.make_square_domain()
    sol = geo.make_sinsin_solution()
    errs = []
    for n in (16, 32):
        mesh_ = msh.restrict_to_domain(msh.build_background(dom.bbox, n), dom)
        interp = np.asarray(sol.eval(mesh_.vertices))
        errs.append(an.error_norms(mesh_, interp, sol)[0])
    assert abs(errs[0] / errs[1] - 4.0) <= 0.4


# ---------------------------------------------------------------------------
# energy norm
# ---------------------------------------------------------------------------

def test_energy_norm_zero(corner_problem):
    _, _, mesh_, quad, _ = corner_problem
    assert an.energy_norm(mesh_, quad, np.zeros(mesh_.num_vertices)) == 0.0


def test_energy_norm_constant_on_fitted_mesh(fitted_square_problem):
    _, _, mesh_, quad, _ = fitted_square_problem
    ones = np.ones(mesh_.num_vertices)
    expect = math.sqrt(float((quad.lengths / quad.h_owner).sum()))
    assert abs(an.energy_norm(mesh_, quad, ones) - expect) <= 1e-12


def test_energy_norm_matches_gram_matrix(corner_problem, rng):
    _, _, mesh_, quad, _ = corner_problem
    gram = an.energy_gram(mesh_, quad)
    for _ in range(5):
        v = rng.standard_normal(mesh_.num_vertices)
        direct = an.energy_norm(mesh_, quad, v)
        viagram = math.sqrt(float(v @ (gram @ v)))
        assert abs(direct - viagram) <= 1e-11 * max(1.0, viagram)


def test_energy_error_dominates_h1(corner_problem):
    dom, sol, mesh_, quad, system = corner_problem
    rep = linsolve.solve(system)
    report = an.error_report(mesh_, quad, rep.solution, sol)
    assert report.err_energy ** 2 - report.err_h1 ** 2 >= -1e-12
    assert report.dofs == mesh_.num_vertices
    assert np.isfinite([report.err_l2, report.err_h1, report.err_energy,
                        report.remainder]).all()


# ---------------------------------------------------------------------------
# remainder norm
# ---------------------------------------------------------------------------

def test_remainder_vanishes_for_affine():
    sol = geo.make_affine_solution(0.4, 0.9, -0.3)
    dom = geo.bind_dirichlet(geo.domain_by_name("corner"), sol)
    mesh_ = msh.restrict_to_domain(msh.build_background(dom.bbox, 12), dom)
    quad = build_boundary_quadrature(mesh_, dom, sol, 3)
    assert an.remainder_norm(mesh_, quad, sol) <= 1e-12


def test_remainder_vanishes_on_fitted_mesh(fitted_square_problem):
    _, sol, mesh_, quad, _ = fitted_square_problem
    assert an.remainder_norm(mesh_, quad, sol) <= 1e-12


def test_remainder_finite_with_quadrature_point_on_corner(corner_problem):
    # a sample sitting exactly on the singular corner is nudged along its
    # edge instead of producing a non-finite gradient
    from dataclasses import replace

    dom, sol, mesh_, quad, _ = corner_problem
    pts = quad.points.copy()
    e = int(np.argmin(np.linalg.norm(pts.reshape(-1, 2), axis=1))) // quad.nq
    pts[e, 0] = 0.0
    value = an.remainder_norm(mesh_, replace(quad, points=pts), sol)
    assert np.isfinite(value)


def test_remainder_decays_on_disk():
    sol = geo.make_sinsin_solution()
    dom = geo.bind_dirichlet(geo.make_disk_domain(), sol)
    values = []
    for n in (16, 32):
        mesh_ = msh.restrict_to_domain(msh.build_background(dom.bbox, n), dom)
        quad = build_boundary_quadrature(mesh_, dom, sol, 3)
        values.append(an.remainder_norm(mesh_, quad, sol))
    assert values[0] / values[1] >= 2.0 - 0.2


# ---------------------------------------------------------------------------
# coercivity
# ---------------------------------------------------------------------------

def dense_min_eig(system, mesh_, quad):
    a_sym = 0.5 * (system.matrix + system.matrix.T).toarray()
    gram = an.energy_gram(mesh_, quad).toarray()
    return float(scipy.linalg.eigh(a_sym, gram, eigvals_only=True)[0])


def test_coercivity_positive_matches_dense_oracle(fitted_square_problem):
    _, _, mesh_, quad, system = fitted_square_problem
    alpha = an.coercivity_estimate(system, mesh_, quad)
    dense = dense_min_eig(system, mesh_, quad)
    assert alpha > 0.0
    assert abs(alpha - dense) <= 1e-8 * max(1.0, abs(dense))


def test_coercivity_reports_negative_without_failing():
    dom, sol, mesh_, quad, system = make_problem("corner", "corner23", 12,
                                                 gamma=0.01)
    alpha = an.coercivity_estimate(system, mesh_, quad)
    dense = dense_min_eig(system, mesh_, quad)
    assert alpha <= 0.0
    assert abs(alpha - dense) <= 1e-8 * max(1.0, abs(dense))


def test_coercivity_sampled_path_tracks_oracle():
    # the sampled Rayleigh-quotient minimizer (used beyond the eigensolve
    # size limit) must find the negative direction when one exists and
    # stay positive when the form is coercive
    from sbmlab.analysis import _min_rayleigh_sampled, energy_gram

    for gamma, sign in ((10.0, 1.0), (0.01, -1.0)):
        dom, sol, mesh_, quad, system = make_problem("corner", "corner23",
                                                     10, gamma=gamma)
        a_sym = (0.5 * (system.matrix + system.matrix.T)).tocsc()
        gram = energy_gram(mesh_, quad).tocsc()
        sampled = _min_rayleigh_sampled(a_sym, gram)
        dense = dense_min_eig(system, mesh_, quad)
        assert sampled * sign > 0.0
        assert sampled >= dense - 1e-9  # the true minimum bounds it below


def test_coercivity_is_a_lower_bound(corner_problem, rng):
    _, _, mesh_, quad, system = corner_problem
    alpha = an.coercivity_estimate(system, mesh_, quad)
    a_sym = 0.5 * (system.matrix + system.matrix.T)
    gram = an.energy_gram(mesh_, quad)
    for _ in range(100):
        v = rng.standard_normal(system.dim)
        quotient = float(v @ (a_sym @ v)) / float(v @ (gram @ v))
        assert alpha <= quotient + 1e-9


# ---------------------------------------------------------------------------
# non-symmetry identity
# ---------------------------------------------------------------------------

def test_nonsymmetry_zero_for_equal_arguments(corner_problem, rng):
    _, _, mesh_, quad, system = corner_problem
    w = rng.standard_normal(system.dim)
    assert an.nonsymmetry_residual(system, mesh_, quad, w, w) == 0.0


def test_nonsymmetry_brackets_vanish_on_fitted_mesh(fitted_square_problem,
                                                    rng):
    _, _, mesh_, quad, system = fitted_square_problem
    w = rng.standard_normal(system.dim)
    v = rng.standard_normal(system.dim)
    lhs = abs(float(v @ (system.matrix @ w)) - float(w @ (system.matrix @ v)))
    scale = max(1.0, abs(float(v @ (system.matrix @ w))))
    assert lhs <= 1e-12 * scale
    assert an.nonsymmetry_residual(system, mesh_, quad, w, v) <= 1e-12


def test_nonsymmetry_identity_on_corner_mesh(corner_problem, rng):
    _, _, mesh_, quad, system = corner_problem
    worst = 0.0
    for _ in range(50):
        w = rng.standard_normal(system.dim)
        v = rng.standard_normal(system.dim)
        worst = max(worst,
                    an.nonsymmetry_residual(system, mesh_, quad, w, v))
    assert worst <= 1e-10


def test_modified_galerkin_orthogonality_for_affine():
    dom, sol, mesh_, quad, system = make_problem("corner",
                                                 "affine:0.5,-0.8,1.2", 8)
    rep = linsolve.solve(system)
    interp = np.asarray(sol.eval(mesh_.vertices))
    defect = np.abs(system.matrix @ (interp - rep.solution)).max()
    assert defect <= 1e-9


# ---------------------------------------------------------------------------
# rate fitting
# ---------------------------------------------------------------------------

def test_fit_rates_basic():
    table = an.fit_rates([(0.1, 1e-2), (0.05, 2.5e-3)])
    assert abs(table.rows[1][2] - 2.0) <= 1e-12
    assert abs(table.fitted_slope - 2.0) <= 1e-12


def test_fit_rates_published_corner_rows():
    # consecutive gradient-error rows of the reference convergence table
    table = an.fit_rates([(2.03e-2, 3.75e-2), (1.01e-2, 2.37e-2)])
    rate = table.rows[1][2]
    assert abs(rate - 0.6574) <= 5e-4
    assert round(rate, 2) == 0.66


def test_fit_rates_constant_errors():
    table = an.fit_rates([(0.2, 3.0), (0.1, 3.0), (0.05, 3.0)])
    assert table.rows[1][2] == 0.0
    assert abs(table.fitted_slope) <= 1e-12


def test_fit_rates_exact_sentinel():
    table = an.fit_rates([(0.1, 1e-15), (0.05, 2e-15)])
    assert math.isnan(table.rows[1][2])
    assert math.isnan(table.fitted_slope)


def test_fit_rates_recompute_consistency():
    series = [(0.4 / 2 ** k, 3.0 * (0.4 / 2 ** k) ** 1.7) for k in range(5)]
    table = an.fit_rates(series)
    for (h0, e0, _), (h1, e1, r) in zip(table.rows, table.rows[1:]):
        assert abs(r - math.log(e0 / e1) / math.log(h0 / h1)) <= 1e-12


def test_fit_rates_validation():
    with pytest.raises(ValueError):
        an.fit_rates([(0.1, 1.0)])
    with pytest.raises(ValueError):
        an.fit_rates([(0.1, 1.0), (0.2, 0.5)])
