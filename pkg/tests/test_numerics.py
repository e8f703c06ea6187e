import math

import numpy as np
import pytest

from cmkd import numerics as nm
from cmkd.numerics import Matrix, SeededRng, ShapeError

from conftest import random_matrix


class TestMatmul:
    def test_identity(self):
        a = nm.from_rows([[1.0, 2.0], [3.0, 4.0]])
        assert nm.matmul(nm.identity(2), a).to_lists() == a.to_lists()

    def test_hand_example(self, oracles):
        a = nm.from_rows([[1, 2], [3, 4]])
        b = nm.from_rows([[5], [6]])
        got = nm.matmul(a, b).to_lists()
        expect = oracles["matmul_2x2_2x1"]
        assert got == [[float(v) for v in row] for row in expect]

    def test_zero_annihilates(self):
        a = random_matrix(SeededRng(1), 3, 4)
        z = nm.zeros(2, 3)
        out = nm.matmul(z, a)
        assert all(v == 0.0 for v in out.data)

    def test_dimension_mismatch_names_shapes(self):
        with pytest.raises(ShapeError, match=r"2x3.*4x2"):
            nm.matmul(nm.zeros(2, 3), nm.zeros(4, 2))

    def test_associativity_random_chains(self):
        rng = SeededRng(12)
        for _ in range(20):
            a = random_matrix(rng, 4, 6)
            b = random_matrix(rng, 6, 3)
            c = random_matrix(rng, 3, 5)
            left = nm.matmul(nm.matmul(a, b), c)
            right = nm.matmul(a, nm.matmul(b, c))
            for x, y in zip(left.data, right.data):
                assert abs(x - y) <= 1e-9 * max(1.0, abs(x), abs(y))

    def test_against_numpy(self):
        rng = SeededRng(55)
        a = random_matrix(rng, 7, 9)
        b = random_matrix(rng, 9, 5)
        got = np.array(nm.matmul(a, b).to_lists())
        want = np.array(a.to_lists()) @ np.array(b.to_lists())
        assert np.allclose(got, want, rtol=1e-12, atol=1e-12)


class TestColumnNorms:
    def test_three_four_five(self):
        assert nm.column_l2_norms(nm.from_rows([[3.0], [4.0]])) == [5.0]

    def test_zero_column(self):
        assert nm.column_l2_norms(nm.zeros(3, 1)) == [0.0]

    def test_diag_example(self, oracles):
        got = nm.column_l2_norms(nm.from_rows([[1, 0], [0, 2]]))
        assert got == oracles["column_norms_diag12"]

    def test_scale_equivariance(self):
        rng = SeededRng(3)
        m = random_matrix(rng, 6, 4)
        base = nm.column_l2_norms(m)
        scaled = m.copy()
        c = 3.5
        for i in range(m.rows):
            scaled.data[i * m.cols + 2] *= c
        got = nm.column_l2_norms(scaled)
        for j in range(4):
            want = base[j] * c if j == 2 else base[j]
            assert abs(got[j] - want) <= 1e-15 * max(1.0, abs(want))


class TestSeededRng:
    def test_same_seed_same_stream(self):
        a = nm.rng_normal(SeededRng(1234), 64)
        b = nm.rng_normal(SeededRng(1234), 64)
        assert a == b

    def test_stream_concatenation(self):
        r1 = SeededRng(9)
        first = nm.rng_normal(r1, 7)
        second = nm.rng_normal(r1, 7)
        r2 = SeededRng(9)
        assert first + second == nm.rng_normal(r2, 14)

    def test_large_sample_mean_near_zero(self):
        draws = nm.rng_normal(SeededRng(2718), 100_000)
        mean = sum(draws) / len(draws)
        assert abs(mean) <= 0.02

    def test_byte_identical_across_runs(self):
        import array
        a = array.array("d", nm.rng_normal(SeededRng(5), 32)).tobytes()
        b = array.array("d", nm.rng_normal(SeededRng(5), 32)).tobytes()
        assert a == b

    def test_negative_count_rejected(self):
        with pytest.raises(ValueError):
            nm.rng_normal(SeededRng(0), -1)

    def test_uniform_in_unit_interval(self):
        rng = SeededRng(31)
        for _ in range(1000):
            u = rng.uniform()
            assert 0.0 <= u < 1.0


class TestMatrix:
    def test_data_length_checked(self):
        import array
        with pytest.raises(ShapeError):
            Matrix(2, 2, array.array("d", [1.0, 2.0, 3.0]))

    def test_take_rows(self):
        m = nm.from_rows([[1, 2], [3, 4], [5, 6]])
        got = nm.take_rows(m, [2, 0])
        assert got.to_lists() == [[5.0, 6.0], [1.0, 2.0]]

    def test_transpose_roundtrip(self):
        m = random_matrix(SeededRng(8), 3, 5)
        assert nm.transpose(nm.transpose(m)).to_lists() == m.to_lists()
