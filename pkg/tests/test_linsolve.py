import numpy as np
import pytest
import scipy.sparse as sp

from sbmlab.assembly import SparseSystem
from sbmlab.linsolve import SolveError, solve


def system_of(a, b, gamma=1.0):
    return SparseSystem(sp.csr_matrix(np.asarray(a, dtype=float)),
                        np.asarray(b, dtype=float), gamma)


def test_identity_system():
    b = np.array([3.0, -1.0, 0.5])
    rep = solve(system_of(np.eye(3), b))
    np.testing.assert_allclose(rep.solution, b, atol=1e-14)
    assert rep.iterations <= 1
    assert rep.final_residual <= 1e-14


def test_upper_triangular_back_substitution():
    rep = solve(system_of([[2.0, 1.0], [0.0, 1.0]], [3.0, 1.0]))
    np.testing.assert_allclose(rep.solution, [1.0, 1.0], atol=1e-14)
    assert rep.method == "dense-lu"


def test_bicgstab_matches_dense_lu_oracle(rng):
    n = 50
    a = rng.standard_normal((n, n))
    a += np.diag(np.abs(a).sum(axis=1) + 1.0)  # diagonally dominant
    b = rng.standard_normal(n)
    rep = solve(system_of(a, b), tol=1e-12, dense_threshold=0)
    assert rep.method == "bicgstab"
    assert rep.final_residual <= 1e-12
    x_lu = np.linalg.solve(a, b)
    assert np.abs(rep.solution - x_lu).max() <= 1e-8


def test_deterministic_iterates(rng):
    n = 80
    a = rng.standard_normal((n, n))
    a += np.diag(np.abs(a).sum(axis=1) + 1.0)
    b = rng.standard_normal(n)
    r1 = solve(system_of(a, b), dense_threshold=0)
    r2 = solve(system_of(a, b), dense_threshold=0)
    assert r1.iterations == r2.iterations
    np.testing.assert_array_equal(r1.solution, r2.solution)


def test_zero_diagonal_rejected():
    a = np.array([[1.0, 2.0], [3.0, 0.0]])
    with pytest.raises(SolveError, match="diagonal"):
        solve(system_of(a, [1.0, 1.0]))


def test_breakdown_reports_history():
    # singular inconsistent system, iterative path: must fail and carry
    # the recent residual history in the message
    a = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(SolveError, match="solver failed"):
        solve(system_of(a, [1.0, -1.0]), dense_threshold=0, max_iter=50)


def test_nonfinite_rhs_rejected():
    with pytest.raises(SolveError, match="finite"):
        solve(system_of(np.eye(2), [np.nan, 1.0]))
