import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asssolve.sparsela import (
    CsrMatrix,
    EigenConvergenceError,
    KrylovConfig,
    dense_eig_general,
    dense_eig_symmetric,
    hessenberg,
    inverse_power_iteration,
    power_iteration,
    spectral_radius,
)

from .conftest import q1_mass_extremes


def _match_sets(a, b, tol):
    """Every element of a has a partner in b within tol (greedy, one-to-one)."""
    b = list(b)
    for z in a:
        d = [abs(z - w) for w in b]
        j = int(np.argmin(d))
        assert d[j] <= tol, (z, b[j])
        b.pop(j)


def test_power_and_inverse_power_on_diagonal():
    a = CsrMatrix.diag([1.0, 2.0, 5.0])
    hi = power_iteration(a)
    lo = inverse_power_iteration(a)
    assert hi.converged and lo.converged
    assert abs(hi.value - 5.0) <= 5e-8 and abs(lo.value - 1.0) <= 1e-8


def test_power_on_mass_matrix_h16(fem4):
    # the attained extremes are the tensor-product values, not the Q1 bounds theta/4, 9 theta/4
    lo_true, hi_true = q1_mass_extremes(fem4.grid.h)
    hi = power_iteration(fem4.M)
    lo = inverse_power_iteration(fem4.M)
    assert hi.value == pytest.approx(hi_true, rel=1e-6)
    assert lo.value == pytest.approx(lo_true, rel=1e-6)
    assert f"{hi.value:.4e}" == "3.8564e-03" and f"{lo.value:.4e}" == "4.5087e-04"


def test_shifted_inverse_power_agrees(fem5):
    lo_true, _ = q1_mass_extremes(fem5.grid.h)
    theta = fem5.grid.theta
    plain = inverse_power_iteration(fem5.M)
    shifted = inverse_power_iteration(fem5.M, shift=theta / 4, x0=np.ones(fem5.m))
    assert shifted.iterations < plain.iterations
    assert shifted.value == pytest.approx(lo_true, rel=1e-8)


def test_power_random_spd_against_jacobi(rng):
    g = rng.standard_normal((40, 40))
    a = g @ g.T + 0.5 * np.eye(40)
    ev = dense_eig_symmetric(a)
    A = CsrMatrix.from_dense(a)
    cfg = KrylovConfig(1e-12, 100000)
    assert power_iteration(A, cfg=cfg).value == pytest.approx(ev[-1], rel=1e-6)
    assert inverse_power_iteration(A, cfg=cfg).value == pytest.approx(ev[0], rel=1e-6)


def test_power_estimates_bracket_spectrum(rng):
    g = rng.standard_normal((25, 25))
    a = g @ g.T + np.eye(25)
    ev = np.linalg.eigvalsh(a)
    A = CsrMatrix.from_dense(a)
    lo, hi = inverse_power_iteration(A).value, power_iteration(A).value
    assert lo <= ev[0] * (1 + 1e-7) and hi >= ev[-1] * (1 - 1e-7)


def test_power_unconverged_is_flagged(rng):
    a = np.diag(np.linspace(1.0, 1.001, 50))
    est = power_iteration(a, cfg=KrylovConfig(1e-15, 3))
    assert not est.converged and est.iterations == 3
    assert 1.0 <= float(est) <= 1.001


def test_start_vector_validation():
    with pytest.raises(ValueError):
        power_iteration(np.eye(3), x0=np.zeros(3))


def test_jacobi_diagonal():
    np.testing.assert_allclose(dense_eig_symmetric(np.diag([3.0, 1.0, 2.0])), [1.0, 2.0, 3.0])


@settings(max_examples=15, deadline=None)
@given(n=st.integers(1, 40), seed=st.integers(0, 2**32 - 1))
def test_jacobi_matches_eigvalsh(n, seed):
    r = np.random.default_rng(seed)
    g = r.standard_normal((n, n))
    a = g + g.T
    np.testing.assert_allclose(dense_eig_symmetric(a), np.linalg.eigvalsh(a), atol=1e-10 * max(1, np.abs(a).max()))


def test_rotation_matrix():
    ev = dense_eig_general(np.array([[0.0, -1.0], [1.0, 0.0]]))
    _match_sets(ev, [1j, -1j], 1e-14)


def test_cube_roots_of_unity():
    companion = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    ev = dense_eig_general(companion)
    _match_sets(ev, np.exp(2j * np.pi * np.arange(3) / 3), 1e-10)


def test_general_diagonal():
    np.testing.assert_allclose(dense_eig_general(np.diag([3.0, 1.0, 2.0])).real, [1.0, 2.0, 3.0])


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 60), seed=st.integers(0, 2**32 - 1))
def test_francis_matches_numpy(n, seed):
    r = np.random.default_rng(seed)
    a = r.standard_normal((n, n))
    ev = dense_eig_general(a)
    _match_sets(ev, np.linalg.eigvals(a), 1e-8 * max(1.0, np.abs(a).sum()))
    # closed under conjugation
    _match_sets(ev, np.conj(ev), 1e-8 * max(1.0, np.abs(a).sum()))


def test_hessenberg_is_similar(rng):
    a = rng.standard_normal((12, 12))
    h = hessenberg(a)
    assert np.all(np.tril(h, -2) == 0)
    _match_sets(np.linalg.eigvals(h), np.linalg.eigvals(a), 1e-10)


def test_francis_on_block_operator(fem3):
    from asssolve.blocksys import build_problem

    B = build_problem(3, 1e-4, 10.0, fem3).op.dense()
    _match_sets(dense_eig_general(B), np.linalg.eigvals(B), 1e-10)
    assert spectral_radius(B) == pytest.approx(np.max(np.abs(np.linalg.eigvals(B))), rel=1e-10)


def test_francis_budget_exhaustion(monkeypatch):
    import asssolve.sparsela.eigen as eig

    real = eig._francis

    def no_budget(h, budget):
        return real(h, 0)

    monkeypatch.setattr(eig, "_francis", no_budget)
    with pytest.raises(EigenConvergenceError):
        eig.dense_eig_general(np.random.default_rng(0).standard_normal((6, 6)))
