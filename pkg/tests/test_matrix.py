"""Matrix types, Matrix Market I/O, scalings, stats, and the CSR oracle kernel."""

import io

import numpy as np
import pytest

from packsell.matrix import (CooMatrix, CsrMatrix, MatrixFormatError, compute_stats,
                             csr_spmv, load_matrix_market, permute_rows, row_sum_scale,
                             sym_diag_scale, to_coo, to_csr, write_matrix_market)

from conftest import dense_of, random_csr, scalar_csr_spmv


def mm(text: str) -> bytes:
    return text.strip().encode() + b"\n"


class TestLoadMatrixMarket:
    def test_general_2x2(self):
        coo = load_matrix_market(mm("""
%%MatrixMarket matrix coordinate real general
2 2 2
1 1 3.0
2 2 4.0
"""))
        assert (coo.n_rows, coo.n_cols) == (2, 2)
        assert coo.entries == [(0, 0, 3.0), (1, 1, 4.0)]

    def test_symmetric_expansion(self):
        coo = load_matrix_market(mm("""
%%MatrixMarket matrix coordinate real symmetric
2 2 2
1 1 1.0
2 1 5.0
"""))
        assert coo.entries == [(0, 0, 1.0), (0, 1, 5.0), (1, 0, 5.0)]

    def test_duplicates_summed(self):
        coo = load_matrix_market(mm("""
%%MatrixMarket matrix coordinate real general
2 2 2
1 1 1.0
1 1 2.0
"""))
        assert coo.entries == [(0, 0, 3.0)]

    def test_integer_field_exact(self):
        coo = load_matrix_market(mm("""
%%MatrixMarket matrix coordinate integer general
1 1 1
1 1 7
"""))
        assert coo.values[0] == 7.0

    def test_comments_and_blank_lines(self):
        coo = load_matrix_market(mm("""
%%MatrixMarket matrix coordinate real general
% a comment
2 3 1

% another
2 3 -1.5e0
"""))
        assert coo.entries == [(1, 2, -1.5)]

    def test_explicit_zero_kept(self):
        coo = load_matrix_market(mm("""
%%MatrixMarket matrix coordinate real general
2 2 2
1 1 0.0
2 2 1.0
"""))
        assert coo.nnz == 2

    @pytest.mark.parametrize("header,msg", [
        ("%%MatrixMarket matrix coordinate pattern general", "pattern"),
        ("%%MatrixMarket matrix coordinate complex general", "complex"),
        ("%%MatrixMarket matrix coordinate real skew-symmetric", "skew"),
        ("%%MatrixMarket matrix array real general", "array"),
        ("%%NotMatrixMarket x y z w", "header"),
    ])
    def test_rejected_headers(self, header, msg):
        with pytest.raises(MatrixFormatError):
            load_matrix_market(mm(header + "\n1 1 1\n1 1 1.0"))

    def test_out_of_bounds_index_reports_line(self):
        with pytest.raises(MatrixFormatError, match="line 3"):
            load_matrix_market(mm("""
%%MatrixMarket matrix coordinate real general
2 2 1
3 1 1.0
"""))

    def test_truncated_entries(self):
        with pytest.raises(MatrixFormatError, match="expected 2"):
            load_matrix_market(mm("""
%%MatrixMarket matrix coordinate real general
2 2 2
1 1 1.0
"""))

    def test_file_object_and_path(self, tmp_path):
        text = mm("""
%%MatrixMarket matrix coordinate real general
1 1 1
1 1 2.5
""")
        p = tmp_path / "t.mtx"
        p.write_bytes(text)
        assert load_matrix_market(p).entries == [(0, 0, 2.5)]
        assert load_matrix_market(io.BytesIO(text)).entries == [(0, 0, 2.5)]

    def test_write_read_round_trip(self, tmp_path, rng):
        A = random_csr(rng, 17, 23)
        p = tmp_path / "rt.mtx"
        write_matrix_market(A, p)
        B = to_csr(load_matrix_market(p))
        assert np.array_equal(A.row_ptr, B.row_ptr)
        assert np.array_equal(A.col_idx, B.col_idx)
        assert np.array_equal(A.values, B.values)


class TestToCsr:
    def test_empty(self):
        A = to_csr(CooMatrix(3, 3, [], [], []))
        assert list(A.row_ptr) == [0, 0, 0, 0]

    def test_identity(self):
        A = to_csr(CooMatrix(3, 3, [0, 1, 2], [0, 1, 2], [1.0, 1.0, 1.0]))
        assert list(A.row_ptr) == [0, 1, 2, 3]
        assert list(A.col_idx) == [0, 1, 2]
        assert list(A.values) == [1.0, 1.0, 1.0]

    def test_prefix_sum_oracle(self):
        # Any 6x6 matrix with per-row counts 3,1,2,3,1,2.
        rows = [0, 0, 0, 1, 2, 2, 3, 3, 3, 4, 5, 5]
        cols = [0, 2, 3, 1, 2, 5, 0, 1, 5, 4, 3, 4]
        A = to_csr(CooMatrix(6, 6, rows, cols, np.arange(12.0)))
        counts = [3, 1, 2, 3, 1, 2]
        expected = [0]
        for c in counts:
            expected.append(expected[-1] + c)
        assert list(A.row_ptr) == expected

    def test_coo_csr_coo_round_trip(self, rng):
        for _ in range(10):
            A = random_csr(rng)
            back = to_coo(A)
            again = to_csr(back)
            assert np.array_equal(A.row_ptr, again.row_ptr)
            assert np.array_equal(A.col_idx, again.col_idx)
            assert np.array_equal(A.values, again.values)

    def test_invariant_violations_rejected(self):
        with pytest.raises(ValueError):
            CsrMatrix(2, 2, [0, 2, 1], [0, 1], [1.0, 1.0])
        with pytest.raises(ValueError):
            CsrMatrix(2, 2, [0, 1], [0], [1.0])


class TestCsrSpmv:
    def test_identity(self):
        A = to_csr(CooMatrix(3, 3, [0, 1, 2], [0, 1, 2], np.ones(3)))
        x = np.array([1.5, -2.0, 0.25])
        assert np.array_equal(csr_spmv(A, x), x)

    def test_diagonal(self):
        A = to_csr(CooMatrix(2, 2, [0, 1], [0, 1], [2.0, 3.0]))
        assert list(csr_spmv(A, np.ones(2))) == [2.0, 3.0]

    @pytest.mark.parametrize("n", [64, 256])
    def test_dense_oracle_banded(self, rng, n):
        A = random_csr(rng, n, n, banded=True)
        x = rng.uniform(-1, 1, n)
        y = csr_spmv(A, x)
        ref = dense_of(A) @ x
        scale = np.maximum(np.abs(ref), 1e-30)
        assert np.all(np.abs(y - ref) / scale < 1e-13)

    @pytest.mark.parametrize("dtype", [np.float64, np.float32])
    def test_left_to_right_accumulation(self, rng, dtype):
        for _ in range(5):
            A = random_csr(rng, 20, 20, density=0.5)
            x = rng.uniform(-1, 1, 20)
            assert np.array_equal(csr_spmv(A, x, dtype), scalar_csr_spmv(A, x, dtype))

    def test_empty_rows_give_zero(self):
        A = to_csr(CooMatrix(3, 2, [1], [1], [5.0]))
        assert list(csr_spmv(A, np.ones(2))) == [0.0, 5.0, 0.0]

    def test_dimension_mismatch(self):
        A = to_csr(CooMatrix(2, 3, [0], [0], [1.0]))
        with pytest.raises(ValueError):
            csr_spmv(A, np.ones(2))


class TestPermuteRows:
    def test_permutation(self, rng):
        A = random_csr(rng, 10, 10)
        order = rng.permutation(10)
        B = permute_rows(A, order)
        dA, dB = dense_of(A), dense_of(B)
        assert np.array_equal(dB, dA[order])


class TestRowSumScale:
    def test_hand_case(self):
        A = to_csr(CooMatrix(1, 2, [0, 0], [0, 1], [3.0, -1.0]))
        B = row_sum_scale(A)
        assert list(B.values) == [0.75, -0.25]

    def test_idempotent(self, rng):
        A = row_sum_scale(random_csr(rng, 30, 30, density=0.3))
        B = row_sum_scale(A)
        assert np.all(np.abs(B.values - A.values) <= 1e-14 * np.abs(A.values))

    def test_scaled_rows_sum_to_one(self, rng):
        B = row_sum_scale(random_csr(rng, 40, 25, density=0.4))
        sums = np.zeros(B.n_rows)
        np.add.at(sums, np.repeat(np.arange(B.n_rows), B.row_lengths()), np.abs(B.values))
        nonempty = B.row_lengths() > 0
        assert np.all(np.abs(sums[nonempty] - 1.0) < 1e-14)

    def test_zero_row_reports_index(self):
        A = to_csr(CooMatrix(3, 3, [0, 2], [0, 2], [1.0, 1.0]))
        with pytest.raises(ValueError, match="row 1"):
            row_sum_scale(A)


class TestSymDiagScale:
    def test_diag_becomes_unit(self):
        A = to_csr(CooMatrix(2, 2, [0, 1], [0, 1], [4.0, 9.0]))
        B = sym_diag_scale(A)
        assert list(B.values) == [1.0, 1.0]

    def test_hand_oracle(self):
        A = to_csr(CooMatrix(2, 2, [0, 0, 1, 1], [0, 1, 0, 1], [4.0, 2.0, 2.0, 9.0]))
        B = sym_diag_scale(A)
        assert np.allclose(dense_of(B), [[1.0, 1 / 3], [1 / 3, 1.0]], rtol=0, atol=1e-15)

    def test_spd_symmetric_pairing_exact(self, rng):
        base = random_csr(rng, 25, 25, density=0.2)
        dense = dense_of(base)
        spd = dense @ dense.T + 25 * np.eye(25)
        r, c = np.nonzero(spd)
        A = to_csr(CooMatrix(25, 25, r, c, spd[r, c]))
        B = sym_diag_scale(A)
        d = dense_of(B)
        assert np.array_equal(d, d.T)
        assert np.all(np.abs(np.diag(d) - 1.0) < 1e-14)

    def test_missing_diagonal_rejected(self):
        A = to_csr(CooMatrix(2, 2, [0, 1], [1, 0], [1.0, 1.0]))
        with pytest.raises(ValueError, match="row 0"):
            sym_diag_scale(A)

    def test_zero_diagonal_rejected(self):
        A = to_csr(CooMatrix(2, 2, [0, 1], [0, 1], [0.0, 1.0]))
        with pytest.raises(ValueError, match="row 0"):
            sym_diag_scale(A)


class TestComputeStats:
    def test_uniform_rows_zero_rsd(self):
        # Same shape class as a matrix with a constant 9 nonzeros per row.
        n = 24
        rows = np.repeat(np.arange(n), 9)
        cols = np.tile(np.arange(9), n)
        st = compute_stats(to_csr(CooMatrix(n, 16, rows, cols, np.ones(9 * n))))
        assert st.rsd == 0.0
        assert st.nnz_per_row_mean == 9.0

    def test_hand_rsd(self):
        A = to_csr(CooMatrix(2, 4, [0, 1, 1, 1], [0, 0, 1, 2], np.ones(4)))
        st = compute_stats(A)
        assert st.rsd == pytest.approx(0.5)  # counts [1, 3]: std 1, mean 2

    def test_tridiagonal_bandwidths(self):
        n = 5
        rows, cols = [], []
        for i in range(n):
            for j in (i - 1, i, i + 1):
                if 0 <= j < n:
                    rows.append(i)
                    cols.append(j)
        st = compute_stats(to_csr(CooMatrix(n, n, rows, cols, np.ones(len(rows)))))
        assert st.lower_bandwidth == 1
        assert st.upper_bandwidth == 1

    def test_empty_rows_count_as_zero(self):
        A = to_csr(CooMatrix(3, 3, [1], [2], [1.0]))
        st = compute_stats(A)
        assert st.nnz_per_row_min == 0.0
        assert st.rsd > 0

    def test_empty_matrix(self):
        st = compute_stats(to_csr(CooMatrix(0, 0, [], [], [])))
        assert st.nnz == 0 and st.rsd == 0.0
