import numpy as np
import pytest

from curlhom.linalg import cocg, pcg


def _spd(n, rng):
    a = rng.standard_normal((n, n))
    return a @ a.T + n * np.eye(n)


def test_pcg_matches_dense_solve():
    rng = np.random.default_rng(0)
    A = _spd(30, rng)
    b = rng.standard_normal(30)
    res = pcg(lambda x: A @ x, b, tol=1e-12)
    assert res.converged
    np.testing.assert_allclose(res.x, np.linalg.solve(A, b), rtol=1e-9)
    assert res.residual <= 1e-12


def test_pcg_with_exact_preconditioner_converges_in_one_step():
    rng = np.random.default_rng(1)
    A = _spd(10, rng)
    Ainv = np.linalg.inv(A)
    res = pcg(lambda x: A @ x, rng.standard_normal(10), precond=lambda r: Ainv @ r, tol=1e-10)
    assert res.iterations <= 2


def test_cocg_solves_complex_symmetric_system():
    rng = np.random.default_rng(2)
    A = _spd(25, rng) - (0.3 + 1.0j) * np.eye(25)
    assert np.allclose(A, A.T)
    b = rng.standard_normal(25) + 1j * rng.standard_normal(25)
    res = cocg(lambda x: A @ x, b, tol=1e-12)
    assert res.converged
    np.testing.assert_allclose(res.x, np.linalg.solve(A, b), rtol=1e-8)


def test_zero_rhs_returns_zero():
    res = pcg(lambda x: 2 * x, np.zeros(5))
    assert res.converged and res.iterations == 0
    np.testing.assert_array_equal(res.x, 0)


def test_maxiter_reports_nonconvergence():
    rng = np.random.default_rng(3)
    A = _spd(50, rng)
    res = pcg(lambda x: A @ x, rng.standard_normal(50), tol=1e-14, maxiter=2)
    assert not res.converged
    assert len(res.history) == res.iterations + 1


@pytest.mark.parametrize("solver", [pcg, cocg])
def test_history_is_monotone_enough(solver):
    A = np.diag(np.arange(1.0, 21.0))
    res = solver(lambda x: A @ x, np.ones(20), tol=1e-12)
    assert res.history[0] == pytest.approx(1.0)
    assert res.history[-1] <= 1e-12
