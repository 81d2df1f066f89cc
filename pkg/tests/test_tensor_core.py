import numpy as np
import pytest

from tensoma.errors import UsageError
from tensoma.tensor_core import (Tensor3, cp_reconstruct, fold, frobenius_norm,
                                 khatri_rao, unfold)


def quadruple_loop_reconstruct(a1, a2, rs):
    i_n, d = a1.shape
    j_n = a2.shape[0]
    k_n = rs.shape[0]
    out = np.zeros((i_n, j_n, k_n))
    for i in range(i_n):
        for j in range(j_n):
            for k in range(k_n):
                for r in range(d):
                    out[i, j, k] += a1[i, r] * a2[j, r] * rs[k, r]
    return out


class TestTensor3:
    def test_rejects_non_3d(self):
        with pytest.raises(UsageError):
            Tensor3(np.zeros((2, 2)))

    def test_rejects_nan(self):
        data = np.zeros((2, 2, 2))
        data[0, 0, 0] = np.nan
        with pytest.raises(UsageError):
            Tensor3(data)

    def test_dims_and_size(self):
        t = Tensor3(np.zeros((2, 3, 4)))
        assert t.dims == (2, 3, 4)
        assert t.data.size == 24


class TestUnfold:
    def test_degenerate_1x1x1(self):
        t = Tensor3(np.full((1, 1, 1), 7.5))
        for mode in (1, 2, 3):
            assert unfold(t, mode).shape == (1, 1)
            assert unfold(t, mode)[0, 0] == 7.5

    def test_2x2x2_round_trip_exact(self):
        t = Tensor3(np.arange(8.0).reshape(2, 2, 2))
        m1 = unfold(t, 1)
        assert m1.shape == (2, 4)
        for mode in (1, 2, 3):
            back = fold(unfold(t, mode), mode, t.dims)
            assert np.array_equal(back.data, t.data)

    def test_mode1_rows_are_slice_vecs(self):
        rng = np.random.default_rng(0)
        t = Tensor3(rng.standard_normal((3, 4, 5)))
        m1 = unfold(t, 1)
        for i in range(3):
            assert np.array_equal(m1[i], t.data[i].ravel(order="F"))

    def test_rank1_mode3_rows(self):
        a = np.array([1.0, 2.0])
        r = np.array([1.0, 0.0, -1.0])
        t = cp_reconstruct(a[:, None], a[:, None], r[:, None])
        m3 = unfold(t, 3)
        vec_aat = np.array([1.0, 2.0, 2.0, 4.0])
        for k in range(3):
            assert np.allclose(m3[k], r[k] * vec_aat, rtol=0, atol=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("mode", [1, 2, 3])
    def test_round_trip_random(self, seed, mode):
        rng = np.random.default_rng(seed)
        dims = rng.integers(1, 7, size=3)
        t = Tensor3(rng.standard_normal(tuple(dims)))
        assert np.array_equal(fold(unfold(t, mode), mode, t.dims).data, t.data)

    def test_invalid_mode(self):
        t = Tensor3(np.zeros((2, 2, 2)))
        with pytest.raises(UsageError):
            unfold(t, 0)
        with pytest.raises(UsageError):
            unfold(t, 4)


class TestKhatriRao:
    def test_identity_1x1(self):
        assert khatri_rao(np.array([[1.0]]), np.array([[1.0]])) == np.array([[1.0]])

    def test_hand_column(self):
        a = np.array([[1.0], [2.0]])
        b = np.array([[3.0], [4.0]])
        assert np.array_equal(khatri_rao(a, b), np.array([[3.0], [4.0], [6.0], [8.0]]))

    @pytest.mark.parametrize("seed", range(5))
    def test_gram_identity(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((3, 2))
        b = rng.standard_normal((4, 2))
        kr = khatri_rao(a, b)
        lhs = kr.T @ kr
        rhs = (a.T @ a) * (b.T @ b)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)

    def test_column_mismatch(self):
        with pytest.raises(UsageError):
            khatri_rao(np.zeros((2, 2)), np.zeros((2, 3)))


class TestCpReconstruct:
    def test_zero_factors(self):
        t = cp_reconstruct(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((3, 2)))
        assert not t.data.any()

    def test_rank1_symmetric(self):
        ones = np.ones((2, 1))
        t = cp_reconstruct(ones, ones, np.array([[2.0]]))
        assert t.dims == (2, 2, 1)
        assert np.array_equal(t.data, np.full((2, 2, 1), 2.0))

    def test_against_quadruple_loop(self):
        rng = np.random.default_rng(1)
        a1 = rng.standard_normal((4, 3))
        a2 = rng.standard_normal((4, 3))
        rs = rng.standard_normal((10, 3))
        t = cp_reconstruct(a1, a2, rs)
        ref = quadruple_loop_reconstruct(a1, a2, rs)
        err = np.linalg.norm((t.data - ref).ravel())
        assert err <= 1e-12 * np.linalg.norm(ref.ravel())

    @pytest.mark.parametrize("seed", range(8))
    def test_random_small_instances(self, seed):
        rng = np.random.default_rng(seed)
        i, j = rng.integers(1, 7, size=2)
        k = int(rng.integers(1, 13))
        d = int(rng.integers(1, 6))
        a1 = rng.standard_normal((i, d))
        a2 = rng.standard_normal((j, d))
        rs = rng.standard_normal((k, d))
        t = cp_reconstruct(a1, a2, rs)
        ref = quadruple_loop_reconstruct(a1, a2, rs)
        err = np.linalg.norm((t.data - ref).ravel())
        assert err <= 1e-12 * max(np.linalg.norm(ref.ravel()), 1e-300)

    def test_column_mismatch(self):
        with pytest.raises(UsageError):
            cp_reconstruct(np.zeros((2, 2)), np.zeros((2, 1)), np.zeros((3, 2)))


class TestFrobenius:
    def test_zero(self):
        assert frobenius_norm(Tensor3(np.zeros((2, 3, 1)))) == 0.0

    def test_single_entry(self):
        assert frobenius_norm(Tensor3(np.full((1, 1, 1), 3.0))) == 3.0

    def test_three_four_five(self):
        t = Tensor3(np.array([3.0, 4.0]).reshape(2, 1, 1))
        assert frobenius_norm(t) == pytest.approx(5.0, abs=1e-15)
