import numpy as np
import pytest

from asssolve.asss import InnerSolveError, TimeLimitExceeded, alpha_star, iteration_matrix_dense
from asssolve.blocksys import ProblemParams, build_problem
from asssolve.precond import (
    AsssPreconditioner,
    BasPreconditioner,
    BdPreconditioner,
    PresbPreconditioner,
    apply_asss_precond,
    apply_bd_precond,
    apply_p_alpha_inverse,
    apply_presb_precond,
    bas_first_projection,
    bas_iteration_alpha,
    bas_iteration_matrix_dense,
    bas_preconditioner_alpha,
    bas_second_projection,
    fgmres_asss,
    fgmres_bas,
    fgmres_bd,
    fgmres_presb,
    ibas_solve,
    p_alpha_apply,
    preconditioner_dense,
    q_alpha_dense,
)
from asssolve.sparsela import KrylovConfig

TIGHT = KrylovConfig(1e-12, 1000)


def _sorted_eigs(a):
    ev = np.linalg.eigvals(a)
    return ev[np.lexsort((np.round(ev.imag, 7), np.round(ev.real, 7)))]


# ---------------------------------------------------------------------------
# ASSS preconditioner


@pytest.mark.parametrize("nu, omega", [(1e-2, 1.0), (1e-6, 1e3)])
def test_asss_precond_inverts_dense_p(fem3, rng, nu, omega):
    problem = build_problem(3, nu, omega, fem3)
    alpha = alpha_star(fem3.M, q1_mass=True)
    p = AsssPreconditioner(problem.op, alpha, mode="exact")
    P = preconditioner_dense(fem3, problem.params, alpha)
    r = rng.standard_normal(4 * fem3.m)
    np.testing.assert_allclose(P @ apply_asss_precond(p, r), r, atol=1e-10 * np.abs(r).max())


def test_asss_precond_zero(fem3):
    p = AsssPreconditioner(build_problem(3, 1e-2, 1.0, fem3).op, 1e-3)
    assert not np.any(apply_asss_precond(p, np.zeros(4 * fem3.m)))


def test_splitting_identities(fem3):
    problem = build_problem(3, 1e-4, 10.0, fem3)
    alpha = alpha_star(fem3.M, q1_mass=True)
    P = preconditioner_dense(fem3, problem.params, alpha)
    Q = q_alpha_dense(fem3, problem.params, alpha)
    B = problem.op.dense()
    assert np.max(np.abs(P - Q - B)) <= 1e-10
    T = iteration_matrix_dense(fem3, problem.params, alpha)
    PinvB = np.linalg.solve(P, B)
    np.testing.assert_allclose(PinvB, np.eye(B.shape[0]) - T, atol=1e-8)
    np.testing.assert_allclose(_sorted_eigs(PinvB), _sorted_eigs(np.eye(B.shape[0]) - T), atol=1e-8)


@pytest.mark.parametrize("nu, omega, expected", [(1e-8, 1e-4, 20), (1e-2, 1e4, 20)])
def test_fgmres_asss_counts_h32(fem5, nu, omega, expected):
    problem = build_problem(5, nu, omega, fem5)
    p = AsssPreconditioner(problem.op, alpha_star(fem5.M, q1_mass=True))
    x, rep = fgmres_asss(problem.op, problem.b, p)
    assert rep.converged
    assert abs(rep.iterations - expected) <= max(5, 0.2 * expected)
    assert problem.relative_residual(x) <= 1.01e-6


def test_exact_inner_solves_do_not_cost_iterations(fem5):
    problem = build_problem(5, 1e-8, 1e-4, fem5)
    alpha = alpha_star(fem5.M, q1_mass=True)
    _, inexact = fgmres_asss(problem.op, problem.b, AsssPreconditioner(problem.op, alpha))
    _, exact = fgmres_asss(problem.op, problem.b, AsssPreconditioner(problem.op, alpha, mode="exact", inner=TIGHT))
    assert exact.converged and exact.iterations <= inexact.iterations


def test_time_limit_raised(fem3):
    problem = build_problem(3, 1e-2, 1.0, fem3)
    p = AsssPreconditioner(problem.op, 1e-3)
    with pytest.raises(TimeLimitExceeded):
        fgmres_asss(problem.op, problem.b, p, deadline=0.0)


@pytest.mark.parametrize("nu, omega", [(1e-2, 1e2), (1e-4, 1.0), (1e-8, 1e4)])
def test_clustering_in_unit_disk_k4(fem4, nu, omega):
    problem = build_problem(4, nu, omega, fem4)
    alpha = alpha_star(fem4.M, q1_mass=True)
    T = iteration_matrix_dense(fem4, problem.params, alpha)
    ev = np.linalg.eigvals(np.eye(T.shape[0]) - T)
    assert np.all(np.abs(ev - 1) <= 1 + 1e-8)
    assert np.all(ev.real > 0)


# ---------------------------------------------------------------------------
# BAS


def test_bas_alpha_defaults():
    p = ProblemParams(1e-2, 10.0)
    assert bas_iteration_alpha(p) == pytest.approx(2.0)
    assert bas_preconditioner_alpha(p) == pytest.approx(2.0 / 2.0)


@pytest.mark.parametrize("nu, omega, alpha", [(1e-2, 1.0, 0.7), (1e-6, 1e3, 2.0), (1.0, 0.0, 1.0)])
def test_p_alpha_inverse_composition(rng, nu, omega, alpha):
    params = ProblemParams(nu, omega)
    x = rng.standard_normal(4 * 13)
    np.testing.assert_allclose(p_alpha_apply(params, alpha, apply_p_alpha_inverse(params, alpha, x)), x, atol=1e-13)
    np.testing.assert_allclose(apply_p_alpha_inverse(params, alpha, p_alpha_apply(params, alpha, x)), x, atol=1e-13)


def test_bas_projections_split_the_system(fem3, rng):
    # P1 A = H1 + S1 with H1 = blockdiag(M, M); P2 A = H2 + S2 with H2 = sqrt(nu) blockdiag(K, K)
    problem = build_problem(3, 1e-2, 10.0, fem3)
    A = problem.A.to_dense()
    x = rng.standard_normal(4 * fem3.m)
    Ax = A @ x
    p1 = bas_first_projection(problem.params, Ax)
    p2 = bas_second_projection(Ax)
    X = x.reshape(4, -1)
    M, K = fem3.M.to_dense(), fem3.K.to_dense()
    # the symmetric parts carry the H blocks: x^T P1 A x = x^T blockdiag(M) x and x^T P2 A x = sqrt(nu) x^T blockdiag(K) x
    assert x @ p1 == pytest.approx(sum(v @ M @ v for v in X), rel=1e-10)
    assert x @ p2 == pytest.approx(problem.params.sqrt_nu * sum(v @ K @ v for v in X), rel=1e-10)
    np.testing.assert_array_equal(bas_second_projection(bas_second_projection(x)), x)


def test_bas_precond_against_dense(fem3, rng):
    problem = build_problem(3, 1e-4, 10.0, fem3)
    params = problem.params
    p = BasPreconditioner(fem3, params, mode="exact")
    a = p.alpha
    m = fem3.m
    beta = params.d + 1j * params.omega * params.sqrt_nu
    N = np.array([[1, np.conj(beta)], [beta, -1]])
    P = np.kron(N / (a * (2 + params.nu * params.omega**2)), np.eye(m))
    W = np.kron(np.eye(2), a * fem3.M.to_dense() + params.sqrt_nu * fem3.K.to_dense())
    Pbas = (1 + a) * P @ W
    r = rng.standard_normal(4 * m)
    z = p.solve(r)
    zc = np.concatenate([z[:m] + 1j * z[m:2 * m], z[2 * m:3 * m] + 1j * z[3 * m:]])
    rc = np.concatenate([r[:m] + 1j * r[m:2 * m], r[2 * m:3 * m] + 1j * r[3 * m:]])
    np.testing.assert_allclose(Pbas @ zc, rc, atol=1e-10)


def test_bas_iteration_converges_for_small_nu_omega_squared(fem3):
    for nu, omega in [(1e-2, 1.0), (1e-4, 10.0), (1e-6, 1e-4), (1e-8, 1e2)]:
        params = ProblemParams(nu, omega)
        T = bas_iteration_matrix_dense(fem3, params, bas_iteration_alpha(params))
        assert np.max(np.abs(np.linalg.eigvals(T))) < 1


def test_ibas_converges_h32(fem5):
    problem = build_problem(5, 1e-6, 1e-4, fem5)
    x, rep = ibas_solve(problem)
    assert rep.converged
    assert abs(rep.iterations - 33) <= 0.2 * 33
    assert problem.relative_residual(x) <= 1e-6


def test_ibas_fails_for_large_nu_omega_squared(fem5):
    problem = build_problem(5, 1e-2, 1e3, fem5)
    _, rep = ibas_solve(problem)
    assert not rep.converged
    assert rep.iterations == 500 or rep.status == "diverged"


def test_ibas_exact_matches_dense_iteration(fem3):
    problem = build_problem(3, 1e-2, 1.0, fem3)
    x, rep = ibas_solve(problem, mode="exact", outer=KrylovConfig(1e-10, 500))
    assert rep.converged
    np.testing.assert_allclose(problem.A.to_dense() @ x, problem.bhat, atol=1e-9 * np.abs(problem.bhat).max())


def test_fgmres_bas_converges(fem4):
    problem = build_problem(4, 1e-4, 1.0, fem4)
    x, rep = fgmres_bas(problem, BasPreconditioner(fem4, problem.params))
    assert rep.converged and rep.iterations < 40
    assert problem.relative_residual(x) <= 1.01e-6


# ---------------------------------------------------------------------------
# PRESB


def test_presb_composition_exact(fem3, rng):
    problem = build_problem(3, 1e-4, 10.0, fem3)
    p = PresbPreconditioner(problem.presb, mode="exact")
    C = problem.presb.calC.to_dense()
    rhs = rng.standard_normal(4 * fem3.m)
    np.testing.assert_allclose(C @ apply_presb_precond(p, rhs), rhs, atol=1e-8)


def test_presb_inexact_recovers_to_inner_tolerance(fem3, rng):
    problem = build_problem(3, 1e-2, 1.0, fem3)
    C = problem.presb.calC.to_dense()
    x0 = rng.standard_normal(4 * fem3.m)
    p = PresbPreconditioner(problem.presb, inner=KrylovConfig(1e-10, 200))
    x = apply_presb_precond(p, C @ x0)
    assert np.linalg.norm(x - x0) <= 1e-6 * np.linalg.norm(x0)
    assert p.gmres_iterations > 0 and p.inner_iterations > p.gmres_iterations


@pytest.mark.parametrize("nu, omega", [(1e-2, 1e-4), (1e-4, 1.0), (1e-6, 1e2), (1e-8, 1e4)])
def test_presb_spectrum_interval(fem3, nu, omega):
    forms = build_problem(3, nu, omega, fem3).presb
    ev = np.linalg.eigvals(np.linalg.solve(forms.calC.to_dense(), forms.calK.to_dense()))
    assert np.max(np.abs(ev.imag)) <= 1e-8
    assert ev.real.min() >= 0.5 - 1e-8 and ev.real.max() <= 1 + 1e-8


def test_presb_inner_failure_propagates(fem3):
    problem = build_problem(3, 1e-2, 1.0, fem3)
    p = PresbPreconditioner(problem.presb, inner=KrylovConfig(1e-14, 1))
    with pytest.raises(InnerSolveError, match="PRESB inner"):
        apply_presb_precond(p, np.ones(4 * fem3.m))


def test_fgmres_presb_small_omega_h32(fem5):
    problem = build_problem(5, 1e-2, 1e-4, fem5)
    x, rep = fgmres_presb(problem, PresbPreconditioner(problem.presb))
    assert rep.converged and abs(rep.iterations - 7) <= 5
    assert problem.relative_residual(x) <= 1.01e-6


# ---------------------------------------------------------------------------
# block diagonal


def test_bd_identity_case(fem3, rng):
    params = ProblemParams(1.0, 0.0)
    p = BdPreconditioner(fem3, params, mode="exact")
    T = fem3.M.to_dense() + fem3.K.to_dense()
    np.testing.assert_allclose(p.matrix.to_dense(), T, rtol=1e-15)
    r = rng.standard_normal(4 * fem3.m)
    z = apply_bd_precond(p, r)
    np.testing.assert_allclose((np.kron(np.eye(4), T) @ z), r, atol=1e-8)
    assert not np.any(apply_bd_precond(p, np.zeros(4 * fem3.m)))


def test_bd_mass_weight_variants(fem3):
    params = ProblemParams(1e-2, 100.0)
    M, K = fem3.M.to_dense(), fem3.K.to_dense()
    a = BdPreconditioner(fem3, params, mode="exact").matrix.to_dense()
    b = BdPreconditioner(fem3, params, mode="exact", mass_weight="omega").matrix.to_dense()
    np.testing.assert_allclose(a, M + 0.1 * (K + 100.0 * M), rtol=1e-14)
    np.testing.assert_allclose(b, 101.0 * M + 0.1 * K, rtol=1e-14)
    with pytest.raises(ValueError):
        BdPreconditioner(fem3, params, mass_weight="nu")


def test_fgmres_bd_h32(fem5):
    problem = build_problem(5, 1e-2, 1e-4, fem5)
    x, rep = fgmres_bd(problem, BdPreconditioner(fem5, problem.params))
    assert rep.converged
    assert abs(rep.iterations - 14) <= 5
    assert problem.relative_residual(x) <= 1.01e-6
