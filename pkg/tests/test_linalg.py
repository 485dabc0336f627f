import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_spd_blocks
from tksmooth import BlockTridiagonalSystem, NotPositiveDefinite, factor, solve
from tksmooth.errors import DimensionMismatch


def scalar_system(diag, sub):
    return BlockTridiagonalSystem(np.array(diag, float).reshape(-1, 1, 1),
                                  np.array(sub, float).reshape(-1, 1, 1))


def test_identity_factor():
    L, D = factor(scalar_system([1, 1], [0])).to_dense()
    np.testing.assert_array_equal(L, np.eye(2))
    np.testing.assert_array_equal(D, np.eye(2))


def test_two_by_two_factor_matches_dense_cholesky():
    L, D = factor(scalar_system([2, 2], [1])).to_dense()
    np.testing.assert_allclose(np.diag(D), [2.0, 1.5], rtol=1e-15)
    assert L[1, 0] == pytest.approx(0.5, rel=1e-15)
    # dense oracle: Cholesky of [[2,1],[1,2]] has c = [[sqrt2, 0], [1/sqrt2, sqrt(1.5)]]
    c = np.linalg.cholesky(np.array([[2.0, 1.0], [1.0, 2.0]]))
    np.testing.assert_allclose(np.diag(D), np.diag(c) ** 2, rtol=1e-14)


def test_indefinite_reports_second_block():
    with pytest.raises(NotPositiveDefinite) as info:
        factor(scalar_system([1, 1], [2]))
    assert info.value.block == 2


def test_solve_identity():
    fac = factor(scalar_system([1, 1], [0]))
    np.testing.assert_array_equal(solve(fac, np.array([1.0, 2.0])), [1.0, 2.0])


def test_solve_two_by_two():
    fac = factor(scalar_system([2, 2], [1]))
    np.testing.assert_allclose(solve(fac, np.array([1.0, 0.0])), [2 / 3, -1 / 3], rtol=1e-14)


def test_solve_random_three_blocks(rng):
    diag, sub = random_spd_blocks(rng, 3, 2)
    sys = BlockTridiagonalSystem(diag, sub)
    rhs = rng.standard_normal(6)
    ref = np.linalg.solve(sys.to_dense(), rhs)
    got = solve(factor(sys), rhs)
    assert np.linalg.norm(got - ref) <= 1e-10 * np.linalg.norm(ref)


def test_solve_keeps_block_shape(rng):
    diag, sub = random_spd_blocks(rng, 4, 3)
    fac = factor(BlockTridiagonalSystem(diag, sub))
    rhs = rng.standard_normal((4, 3))
    out = solve(fac, rhs)
    assert out.shape == (4, 3)
    np.testing.assert_allclose(out.ravel(), solve(fac, rhs.ravel()))


def test_solve_rejects_wrong_length(rng):
    diag, sub = random_spd_blocks(rng, 3, 2)
    fac = factor(BlockTridiagonalSystem(diag, sub))
    with pytest.raises(DimensionMismatch):
        solve(fac, np.ones(5))


def test_bad_shapes_rejected():
    with pytest.raises(DimensionMismatch):
        BlockTridiagonalSystem(np.ones((3, 2, 2)), np.ones((3, 2, 2)))
    with pytest.raises(DimensionMismatch):
        BlockTridiagonalSystem(np.ones((3, 2, 3)), np.ones((2, 2, 3)))


def test_asymmetric_diag_rejected():
    diag = np.array([[[2.0, 1.0], [0.0, 2.0]]])
    with pytest.raises(DimensionMismatch):
        factor(BlockTridiagonalSystem(diag, np.zeros((0, 2, 2))))


def test_single_block():
    sys = BlockTridiagonalSystem(np.array([[[4.0, 2.0], [2.0, 3.0]]]), np.zeros((0, 2, 2)))
    np.testing.assert_allclose(solve(factor(sys), np.array([1.0, 1.0])),
                               np.linalg.solve(sys.to_dense(), [1.0, 1.0]), rtol=1e-14)


def test_matvec_matches_dense(rng):
    diag, sub = random_spd_blocks(rng, 5, 2)
    sys = BlockTridiagonalSystem(diag, sub)
    x = rng.standard_normal(10)
    np.testing.assert_allclose(sys.matvec(x), sys.to_dense() @ x, rtol=1e-13, atol=1e-13)


dims = st.tuples(st.integers(1, 20), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))


@given(dims)
def test_solve_matches_dense_oracle(args):
    N, n, seed = args
    gen = np.random.default_rng(seed)
    diag, sub = random_spd_blocks(gen, N, n)
    sys = BlockTridiagonalSystem(diag, sub)
    rhs = gen.standard_normal(N * n)
    ref = np.linalg.solve(sys.to_dense(), rhs)
    got = solve(factor(sys), rhs)
    assert np.linalg.norm(got - ref) / np.linalg.norm(rhs) < 1e-9


@given(dims)
def test_factor_reconstructs(args):
    N, n, seed = args
    gen = np.random.default_rng(seed)
    diag, sub = random_spd_blocks(gen, N, n)
    sys = BlockTridiagonalSystem(diag, sub)
    L, D = factor(sys).to_dense()
    C = sys.to_dense()
    assert np.linalg.norm(L @ D @ L.T - C) / np.linalg.norm(C) < 1e-12


@given(dims, st.data())
def test_planted_negative_eigenvalue_rejected(args, data):
    N, n, seed = args
    gen = np.random.default_rng(seed)
    diag, sub = random_spd_blocks(gen, N, n)
    j = data.draw(st.integers(0, N - 1))
    u = gen.standard_normal(n)
    u /= np.linalg.norm(u)
    # the block itself gets a negative eigenvalue, so C has an indefinite principal minor
    lam = np.linalg.eigvalsh(diag[j]).max()
    diag[j] -= (lam + 1.0) * np.outer(u, u)
    with pytest.raises(NotPositiveDefinite) as info:
        factor(BlockTridiagonalSystem(diag, sub))
    assert 1 <= info.value.block <= j + 1
