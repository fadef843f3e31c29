import numpy as np
import pytest

import tensorconv as tc
from tensorconv import DenseTensor, SparseTensor
from oracles import contract_oracle, outer_product_oracle, subarray_oracle


class TestDenseTensor:
    def test_basic_shape(self):
        t = DenseTensor([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        assert t.dims == (2, 3)
        assert t.order == 2
        assert t.size == 6

    def test_scalar_order_zero(self):
        t = DenseTensor(5.0)
        assert t.dims == ()
        assert t.order == 0
        assert t.item() == 5.0

    def test_one_based_access(self):
        t = DenseTensor([[1.0, 2.0], [3.0, 4.0]])
        assert t.at(1, 1) == 1.0
        assert t.at(2, 1) == 3.0
        with pytest.raises(IndexError):
            t.at(0, 1)
        with pytest.raises(IndexError):
            t.at(3, 1)

    def test_immutable(self):
        t = DenseTensor([1.0, 2.0])
        with pytest.raises(ValueError):
            t.data[0] = 9.0


class TestElementwise:
    def test_add_neutralizes_negation(self):
        t = DenseTensor([[1.0, -2.0], [0.5, 3.0]])
        zero = tc.add(t, tc.scale(-1.0, t))
        assert (zero.data == 0).all()

    def test_norm_of_zero(self):
        assert tc.frobenius_norm(DenseTensor.zeros((3, 2))) == 0.0

    def test_norm_three_four_five(self):
        assert tc.frobenius_norm(DenseTensor([3.0, 4.0])) == 5.0

    def test_dimension_mismatch(self):
        with pytest.raises(tc.DimensionMismatch):
            tc.add(DenseTensor([1.0]), DenseTensor([1.0, 2.0]))
        with pytest.raises(tc.DimensionMismatch):
            tc.sub(DenseTensor([[1.0]]), DenseTensor([1.0]))


class TestTensorProduct:
    def test_small_example(self):
        out = tc.tensor_product(DenseTensor([1.0, 2.0]), DenseTensor([3.0, 4.0]))
        assert out.dims == (2, 2)
        np.testing.assert_array_equal(out.data, [[3.0, 4.0], [6.0, 8.0]])

    def test_matches_outer_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            qa = int(rng.integers(0, 3))
            qb = int(rng.integers(0, 3))
            a = rng.standard_normal(tuple(rng.integers(1, 4, size=qa)))
            b = rng.standard_normal(tuple(rng.integers(1, 4, size=qb)))
            got = tc.tensor_product(DenseTensor(a), DenseTensor(b))
            np.testing.assert_allclose(got.data, outer_product_oracle(a, b), atol=1e-12)

    def test_scalar_multiplication_property(self):
        rng = np.random.default_rng(7)
        a = DenseTensor(rng.standard_normal((2, 3)))
        b = DenseTensor(rng.standard_normal(4))
        alpha = 2.5
        left = tc.tensor_product(tc.scale(alpha, a), b)
        right = tc.scale(alpha, tc.tensor_product(a, b))
        np.testing.assert_allclose(left.data, right.data, atol=1e-12)
        mid = tc.tensor_product(a, tc.scale(alpha, b))
        np.testing.assert_allclose(mid.data, right.data, atol=1e-12)

    def test_distributes_over_sum(self):
        rng = np.random.default_rng(8)
        a = DenseTensor(rng.standard_normal(3))
        b = DenseTensor(rng.standard_normal(4))
        c = DenseTensor(rng.standard_normal(4))
        left = tc.tensor_product(a, b + c)
        right = tc.tensor_product(a, b) + tc.tensor_product(a, c)
        np.testing.assert_allclose(left.data, right.data, atol=1e-12)


class TestInnerProduct:
    def test_vectors_give_dot_product(self):
        out = tc.inner_product(DenseTensor([1.0, 2.0]), DenseTensor([3.0, 4.0]), 1)
        assert out.order == 0
        assert out.item() == 11.0

    def test_outer_then_contract(self):
        rng = np.random.default_rng(5)
        u = DenseTensor(rng.standard_normal(3))
        x = DenseTensor(rng.standard_normal(4))
        y = DenseTensor(rng.standard_normal(4))
        got = tc.inner_product(tc.tensor_product(u, x), y, 1)
        want = tc.scale(float(np.dot(x.data, y.data)), u)
        np.testing.assert_allclose(got.data, want.data, atol=1e-12)

    def test_equal_order_commutes_to_scalar(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            dims = tuple(rng.integers(1, 4, size=int(rng.integers(1, 4))))
            a = DenseTensor(rng.standard_normal(dims))
            b = DenseTensor(rng.standard_normal(dims))
            ab = tc.inner_product(a, b, a.order)
            ba = tc.inner_product(b, a, a.order)
            assert ab.order == 0
            assert abs(ab.item() - ba.item()) <= 1e-12

    def test_order_error(self):
        a = DenseTensor([1.0, 2.0])
        with pytest.raises(tc.OrderError):
            tc.inner_product(a, a, 2)
        with pytest.raises(tc.OrderError):
            tc.inner_product(a, a, 0)

    def test_dimension_mismatch(self):
        with pytest.raises(tc.DimensionMismatch):
            tc.inner_product(DenseTensor([1.0, 2.0]), DenseTensor([1.0, 2.0, 3.0]), 1)

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(25):
            r = int(rng.integers(1, 3))
            shared = tuple(rng.integers(1, 4, size=r))
            lead = tuple(rng.integers(1, 4, size=int(rng.integers(0, 3))))
            rest = tuple(rng.integers(1, 4, size=int(rng.integers(0, 3))))
            a = rng.standard_normal(lead + shared)
            b = rng.standard_normal(shared + rest)
            got = tc.inner_product(DenseTensor(a), DenseTensor(b), r)
            np.testing.assert_allclose(got.data, contract_oracle(a, b, r), atol=1e-12)

    def test_bilinearity(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            a1 = rng.standard_normal((3, 4))
            a2 = rng.standard_normal((3, 4))
            b = rng.standard_normal((4, 2))
            alpha = float(rng.standard_normal())
            left = tc.inner_product(
                DenseTensor(alpha * a1 + a2), DenseTensor(b), 1
            )
            right = tc.scale(
                alpha, tc.inner_product(DenseTensor(a1), DenseTensor(b), 1)
            ) + tc.inner_product(DenseTensor(a2), DenseTensor(b), 1)
            np.testing.assert_allclose(left.data, right.data, atol=1e-12)

    def test_sparse_left_matches_densified(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            dense = rng.standard_normal((3, 2, 4))
            dense[rng.random(dense.shape) < 0.6] = 0.0
            sp = SparseTensor.sparsify(DenseTensor(dense))
            other = DenseTensor(rng.standard_normal((2, 4, 5)))
            got = tc.inner_product(sp, other, 2)
            want = tc.inner_product(sp.densify(), other, 2)
            np.testing.assert_allclose(got.data, want.data, atol=1e-12)

    def test_sparse_right_matches_densified(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            dense = rng.standard_normal((2, 4, 3))
            dense[rng.random(dense.shape) < 0.6] = 0.0
            sp = SparseTensor.sparsify(DenseTensor(dense))
            other = DenseTensor(rng.standard_normal((5, 2, 4)))
            got = tc.inner_product(other, sp, 2)
            want = tc.inner_product(other, sp.densify(), 2)
            np.testing.assert_allclose(got.data, want.data, atol=1e-12)

    def test_sparse_sparse_unsupported(self):
        i = tc.identity_tensor((2,))
        with pytest.raises(TypeError):
            tc.inner_product(i, i, 1)


class TestIdentityTensor:
    def test_vector_space_identity_is_eye(self):
        i = tc.identity_tensor((3,))
        np.testing.assert_array_equal(i.densify().data, np.eye(3))

    def test_nnz_counts_diagonal(self):
        assert tc.identity_tensor((2, 3, 4)).nnz == 24

    def test_identity_law_exact(self):
        rng = np.random.default_rng(13)
        for dims in [(2,), (2, 3), (4, 2, 5), (5, 5)]:
            t = DenseTensor(rng.standard_normal(dims))
            i = tc.identity_tensor(dims)
            left = tc.inner_product(i, t, t.order)
            right = tc.inner_product(t, i, t.order)
            np.testing.assert_array_equal(left.data, t.data)
            np.testing.assert_array_equal(right.data, t.data)


class TestSubarray:
    def test_vector_slice(self):
        t = DenseTensor([10.0, 20.0, 30.0, 40.0, 50.0])
        got = tc.subarray(t, [(2, 4)])
        np.testing.assert_array_equal(got.data, [20.0, 30.0, 40.0])

    def test_full_ranges_identity(self):
        rng = np.random.default_rng(14)
        t = DenseTensor(rng.standard_normal((3, 4)))
        got = tc.subarray(t, [(1, 3), (1, 4)])
        np.testing.assert_array_equal(got.data, t.data)

    def test_top_left_block(self):
        t = DenseTensor(np.arange(9.0).reshape(3, 3))
        got = tc.subarray(t, [tc.IndexRange(1, 2), tc.IndexRange(1, 2)])
        np.testing.assert_array_equal(got.data, t.data[:2, :2])

    def test_matches_shift_oracle(self):
        rng = np.random.default_rng(15)
        for _ in range(10):
            dims = tuple(rng.integers(2, 6, size=int(rng.integers(1, 4))))
            a = rng.standard_normal(dims)
            ranges = []
            for n in dims:
                lo = int(rng.integers(1, n + 1))
                hi = int(rng.integers(lo, n + 1))
                ranges.append((lo, hi))
            got = tc.subarray(DenseTensor(a), ranges)
            np.testing.assert_array_equal(got.data, subarray_oracle(a, ranges))

    def test_out_of_bounds(self):
        t = DenseTensor([1.0, 2.0, 3.0])
        with pytest.raises(tc.RangeError):
            tc.subarray(t, [(2, 4)])
        with pytest.raises(tc.RangeError):
            tc.subarray(t, [(0, 2)])
        with pytest.raises(tc.RangeError):
            tc.subarray(t, [(1, 2), (1, 2)])


class TestSparseTensor:
    def test_round_trip_drops_exact_zeros(self):
        rng = np.random.default_rng(16)
        dense = rng.standard_normal((4, 3))
        dense[rng.random(dense.shape) < 0.5] = 0.0
        t = DenseTensor(dense)
        sp = SparseTensor.sparsify(t)
        assert sp.nnz == int(np.count_nonzero(dense))
        np.testing.assert_array_equal(sp.densify().data, dense)

    def test_entries_sorted_lexicographically(self):
        sp = SparseTensor((3, 3), [((3, 1), 1.0), ((1, 2), 2.0), ((2, 3), 3.0)])
        assert [idx for idx, _ in sp.entries()] == [(1, 2), (2, 3), (3, 1)]

    def test_duplicate_rejected(self):
        with pytest.raises(ValueError):
            SparseTensor((2, 2), [((1, 1), 1.0), ((1, 1), 2.0)])

    def test_out_of_range_rejected(self):
        with pytest.raises(tc.RangeError):
            SparseTensor((2, 2), [((0, 1), 1.0)])
        with pytest.raises(tc.RangeError):
            SparseTensor((2, 2), [((1, 3), 1.0)])

    def test_block_transpose_is_operator_transpose(self):
        rng = np.random.default_rng(17)
        dense = rng.standard_normal((3, 4))
        dense[rng.random(dense.shape) < 0.5] = 0.0
        sp = SparseTensor.sparsify(DenseTensor(dense))
        flipped = sp.block_transpose(1)
        np.testing.assert_array_equal(flipped.densify().data, dense.T)

    def test_with_values_keeps_pattern(self):
        sp = SparseTensor((2, 2), [((1, 2), 5.0), ((2, 1), 7.0)])
        new = sp.with_values([1.0, 0.0])
        assert new.nnz == 2
        assert [v for _, v in new.entries()] == [1.0, 0.0]
