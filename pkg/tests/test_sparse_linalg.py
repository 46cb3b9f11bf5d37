import numpy as np
import pytest

from gridclear.sparse_linalg import (
    NumericalSingularityError,
    SparseMatrix,
    StructuralSingularityError,
    factorize,
    numeric_factorize,
    read_matrixmarket,
    solve,
    symbolic_factorize,
    write_matrixmarket,
)

from oracles import dense_lu_nopivot, dense_symbolic_fill


def random_spd_dominant(rng, n, density=0.15):
    """Symmetric-pattern, diagonally dominant sparse test matrix."""
    a = np.zeros((n, n))
    mask = rng.random((n, n)) < density
    mask = mask | mask.T
    vals = rng.uniform(-1.0, 1.0, size=(n, n))
    a[mask] = vals[mask]
    np.fill_diagonal(a, np.abs(a).sum(axis=1) + 1.0)
    return a


def reconstruct(f):
    """L @ U mapped back to original coordinates."""
    prod = f.lower.to_dense() @ f.upper.to_dense()
    n = f.n
    out = np.zeros((n, n))
    p = f.perm
    for i in range(n):
        for j in range(n):
            out[p[i], p[j]] = prod[i, j]
    return out


class TestSparseMatrix:
    def test_from_dense_round_trip(self):
        a = np.array([[1.0, 0, 2.0], [0, 3.0, 0], [4.0, 0, 5.0]])
        m = SparseMatrix.from_dense(a)
        assert m.nnz == 5
        np.testing.assert_array_equal(m.to_dense(), a)

    def test_invalid_row_ptr_rejected(self):
        with pytest.raises(ValueError):
            SparseMatrix(2, 2, [0, 2, 1], [0, 1, 0], [1.0, 2.0, 3.0])

    def test_unsorted_columns_rejected(self):
        with pytest.raises(ValueError):
            SparseMatrix(1, 3, [0, 2], [2, 0], [1.0, 2.0])

    def test_matvec(self):
        a = np.array([[2.0, 0.0], [1.0, 3.0]])
        m = SparseMatrix.from_dense(a)
        np.testing.assert_allclose(m.matvec([1.0, 2.0]), a @ [1.0, 2.0])

    def test_matrixmarket_round_trip(self, tmp_path):
        a = random_spd_dominant(np.random.default_rng(0), 8)
        m = SparseMatrix.from_dense(a)
        path = tmp_path / "m.mtx"
        write_matrixmarket(path, m)
        m2 = read_matrixmarket(path)
        np.testing.assert_allclose(m2.to_dense(), a)


class TestSymbolic:
    def test_tridiagonal_no_fill_chain_levels(self):
        a = np.diag([4.0] * 4) + np.diag([1.0] * 3, 1) + np.diag([1.0] * 3, -1)
        sym = symbolic_factorize(SparseMatrix.from_dense(a), order="natural")
        assert sym.fill_count == 0
        assert len(sym.levels) == 4
        assert [list(lv) for lv in sym.levels] == [[0], [1], [2], [3]]

    def test_arrow_natural_vs_reversed(self):
        n = 5
        a = np.eye(n)
        a[-1, :] = 1.0
        a[:, -1] = 1.0
        m = SparseMatrix.from_dense(a)
        assert symbolic_factorize(m, order="natural").fill_count == 0
        rev = symbolic_factorize(m, order=np.arange(n)[::-1])
        assert rev.fill_count == (n - 1) * (n - 2) // 2
        assert set(rev.fill_edges) == dense_symbolic_fill(a != 0, np.arange(n)[::-1])
        # min-degree restores the no-fill elimination order
        assert symbolic_factorize(m).fill_count == 0

    def test_diagonal_single_level(self):
        m = SparseMatrix.from_dense(np.diag(np.arange(1.0, 7.0)))
        sym = symbolic_factorize(m)
        assert len(sym.levels) == 1
        assert sorted(sym.levels[0]) == list(range(6))

    def test_fill_matches_dense_oracle_random(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = rng.integers(3, 12)
            a = random_spd_dominant(rng, int(n), density=0.3)
            m = SparseMatrix.from_dense(a)
            sym = symbolic_factorize(m, order="natural")
            assert set(sym.fill_edges) == dense_symbolic_fill(a != 0, np.arange(n))

    def test_missing_diagonal_reported(self):
        a = np.array([[0.0, 1.0], [1.0, 0.0]])
        with pytest.raises(StructuralSingularityError) as exc:
            symbolic_factorize(SparseMatrix.from_dense(a), order="natural")
        assert exc.value.pivot in (0, 1)

    def test_level_validity_from_pattern(self):
        rng = np.random.default_rng(3)
        a = random_spd_dominant(rng, 30)
        f = factorize(SparseMatrix.from_dense(a))
        lower = {(i, int(j)) for i in range(f.n) for j in f.lower.row(i)[0] if j != i}
        upper = {(i, int(j)) for i in range(f.n) for j in f.upper.row(i)[0] if j != i}
        for level in f.levels:
            for p in level:
                for q in level:
                    if p != q:
                        assert (p, q) not in upper
                        assert (q, p) not in lower


class TestNumeric:
    def test_two_by_two_hand_factors(self):
        m = SparseMatrix.from_dense([[4.0, 3.0], [6.0, 3.0]])
        f = numeric_factorize(m, symbolic_factorize(m, order="natural"))
        np.testing.assert_allclose(f.lower.to_dense(), [[1.0, 0.0], [1.5, 1.0]])
        np.testing.assert_allclose(f.upper.to_dense(), [[4.0, 3.0], [0.0, -1.5]])

    def test_identity(self):
        m = SparseMatrix.from_dense(np.eye(5))
        f = factorize(m)
        np.testing.assert_array_equal(f.lower.to_dense(), np.eye(5))
        np.testing.assert_array_equal(f.upper.to_dense(), np.eye(5))

    def test_matches_dense_doolittle(self):
        rng = np.random.default_rng(11)
        a = random_spd_dominant(rng, 12, density=0.4)
        f = factorize(SparseMatrix.from_dense(a), order="natural")
        l_ref, u_ref = dense_lu_nopivot(a)
        np.testing.assert_allclose(f.lower.to_dense(), l_ref, atol=1e-12)
        np.testing.assert_allclose(f.upper.to_dense(), u_ref, atol=1e-12)

    def test_numeric_singularity_reported(self):
        m = SparseMatrix.from_dense([[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(NumericalSingularityError) as exc:
            numeric_factorize(m, symbolic_factorize(m, order="natural"))
        assert exc.value.pivot == 1

    def test_reconstruction_100_random(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            n = int(rng.integers(2, 51))
            a = random_spd_dominant(rng, n)
            f = factorize(SparseMatrix.from_dense(a))
            err = np.max(np.abs(reconstruct(f) - a))
            assert err <= 1e-9 * np.max(np.abs(a))

    def test_determinism_bitwise(self):
        rng = np.random.default_rng(5)
        a = random_spd_dominant(rng, 25)
        m = SparseMatrix.from_dense(a)
        f1 = factorize(m)
        f2 = factorize(m)
        assert f1.levels == f2.levels
        assert f1.fill_edges == f2.fill_edges
        assert np.array_equal(f1.lower.values, f2.lower.values)
        assert np.array_equal(f1.upper.values, f2.upper.values)


class TestSolve:
    def test_identity_solve(self):
        f = factorize(SparseMatrix.from_dense(np.eye(3)))
        np.testing.assert_array_equal(solve(f, [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])

    def test_two_by_two_hand_solve(self):
        f = factorize(SparseMatrix.from_dense([[4.0, 3.0], [6.0, 3.0]]), order="natural")
        np.testing.assert_allclose(solve(f, [7.0, 9.0]), [1.0, 1.0], atol=1e-12)

    def test_random_against_dense(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            n = int(rng.integers(2, 40))
            a = random_spd_dominant(rng, n)
            rhs = rng.uniform(-2, 2, size=n)
            x = solve(factorize(SparseMatrix.from_dense(a)), rhs)
            np.testing.assert_allclose(x, np.linalg.solve(a, rhs), atol=1e-8)
            resid = np.max(np.abs(a @ x - rhs))
            assert resid <= 1e-8 * (1 + np.max(np.abs(rhs)))

    def test_dimension_mismatch(self):
        f = factorize(SparseMatrix.from_dense(np.eye(3)))
        with pytest.raises(ValueError):
            solve(f, [1.0, 2.0])
