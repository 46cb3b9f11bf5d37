"""Sparse CSR matrices with symbolic/numeric LU factorization and level scheduling.

The factorization is diagonal-pivot Doolittle LU on a fill-reducing
(minimum-degree) symmetric permutation.  The symbolic pass computes the fill
pattern once; numeric passes reuse it, which is what makes repeated
power-flow sweeps cheap.  Pivot rows are additionally partitioned into
*levels*: sets of pivots with no mutual dependency in the elimination DAG,
so factor and solve work inside one level may run in any order (or in
parallel) without changing the result.  The implementation here is serial,
which is a valid schedule under that contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse


class StructuralSingularityError(ValueError):
    """Pattern admits no nonzero pivot at `pivot` (permuted position)."""

    def __init__(self, pivot, message=None):
        self.pivot = pivot
        super().__init__(message or f"structurally singular at pivot {pivot}")


class NumericalSingularityError(ValueError):
    """Pivot magnitude fell below the breakdown threshold at `pivot`."""

    def __init__(self, pivot, value):
        self.pivot = pivot
        self.value = value
        super().__init__(f"numerically singular at pivot {pivot}: |{value:.3e}| below threshold")


PIVOT_THRESHOLD = 1e-12


@dataclass(frozen=True)
class SparseMatrix:
    """Compressed-sparse-row matrix.

    `row_ptr` has length `n_rows + 1`; column indices are strictly
    increasing within each row.
    """

    n_rows: int
    n_cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_ptr", np.asarray(self.row_ptr, dtype=np.int64))
        object.__setattr__(self, "col_idx", np.asarray(self.col_idx, dtype=np.int64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if len(self.row_ptr) != self.n_rows + 1:
            raise ValueError("row_ptr length must be n_rows + 1")
        if np.any(np.diff(self.row_ptr) < 0):
            raise ValueError("row_ptr must be nondecreasing")
        if len(self.values) != self.row_ptr[-1] or len(self.col_idx) != self.row_ptr[-1]:
            raise ValueError("values/col_idx length must equal row_ptr[-1]")
        for i in range(self.n_rows):
            cols = self.col_idx[self.row_ptr[i]:self.row_ptr[i + 1]]
            if len(cols) and (np.any(np.diff(cols) <= 0) or cols[0] < 0 or cols[-1] >= self.n_cols):
                raise ValueError(f"row {i}: column indices must be strictly increasing and in range")

    @property
    def nnz(self):
        return int(self.row_ptr[-1])

    def row(self, i):
        """(cols, vals) view of row i."""
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.col_idx[lo:hi], self.values[lo:hi]

    @classmethod
    def from_coo(cls, n_rows, n_cols, rows, cols, vals):
        """Build from coordinate triplets; duplicate positions are summed."""
        m = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(n_rows, n_cols)).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        return cls(n_rows, n_cols, m.indptr, m.indices, m.data)

    @classmethod
    def from_dense(cls, a, drop_tol=0.0):
        a = np.asarray(a, dtype=float)
        rows, cols = np.nonzero(np.abs(a) > drop_tol)
        return cls.from_coo(a.shape[0], a.shape[1], rows, cols, a[rows, cols])

    def to_dense(self):
        out = np.zeros((self.n_rows, self.n_cols))
        for i in range(self.n_rows):
            cols, vals = self.row(i)
            out[i, cols] = vals
        return out

    def to_scipy(self):
        return scipy.sparse.csr_matrix(
            (self.values, self.col_idx, self.row_ptr), shape=(self.n_rows, self.n_cols)
        )

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_cols,):
            raise ValueError(f"vector length {x.shape} does not match n_cols {self.n_cols}")
        out = np.zeros(self.n_rows)
        for i in range(self.n_rows):
            cols, vals = self.row(i)
            out[i] = vals @ x[cols]
        return out

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (
            self.n_rows == other.n_rows
            and self.n_cols == other.n_cols
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
            and np.array_equal(self.values, other.values)
        )


def read_matrixmarket(path):
    """Load a MatrixMarket coordinate file as a SparseMatrix."""
    m = scipy.io.mmread(str(path)).tocoo()
    return SparseMatrix.from_coo(m.shape[0], m.shape[1], m.row, m.col, m.data)


def write_matrixmarket(path, m):
    scipy.io.mmwrite(str(path), m.to_scipy())


def minimum_degree_order(m):
    """Greedy minimum-degree permutation of a square pattern.

    Works on the symmetrized adjacency graph; ties go to the lowest vertex
    index so the ordering is deterministic.  Returns `perm` such that pivot
    k of the factorization is original row/column `perm[k]`.
    """
    n = m.n_rows
    adj = _symmetrized_adjacency(m)
    degree = np.array([len(a) for a in adj])
    alive = np.ones(n, dtype=bool)
    perm = np.empty(n, dtype=np.int64)
    for k in range(n):
        best = -1
        for v in range(n):
            if alive[v] and (best < 0 or degree[v] < degree[best]):
                best = v
        perm[k] = best
        alive[best] = False
        nbrs = [w for w in adj[best] if alive[w]]
        for w in nbrs:
            adj[w].discard(best)
            adj[w].update(x for x in nbrs if x != w)
            degree[w] = len(adj[w])
    return perm


def _symmetrized_adjacency(m):
    n = m.n_rows
    adj = [set() for _ in range(n)]
    for i in range(n):
        cols, _ = m.row(i)
        for j in cols:
            if j != i:
                adj[i].add(int(j))
                adj[int(j)].add(i)
    return adj


@dataclass(frozen=True)
class SymbolicLU:
    """Fill pattern, fill-in edges and elimination levels for one sparsity.

    Row/column patterns are in permuted (pivot-order) coordinates; the
    `fill_edges` list reports undirected (i, j) pairs, i < j, in the
    original matrix numbering — positions the factors hold that the input
    did not.
    """

    n: int
    perm: np.ndarray
    lower_rows: tuple          # per pivot row k: sorted tuple of columns < k
    upper_rows: tuple          # per pivot row k: sorted tuple of columns >= k (incl. diagonal)
    fill_edges: tuple
    levels: tuple              # ordered partition of pivot indices 0..n-1

    @property
    def fill_count(self):
        return len(self.fill_edges)


def symbolic_factorize(m, order="mindeg"):
    """Compute the LU fill pattern and elimination levels of a square pattern.

    Parameters
    ----------
    m : SparseMatrix
        Square matrix; only the sparsity pattern is read.
    order : "mindeg" | "natural" | array of int
        Fill-reducing permutation to apply first.  "mindeg" (default) runs
        greedy minimum degree; "natural" keeps the given order; an explicit
        array is used as-is.

    Raises
    ------
    StructuralSingularityError
        if some pivot has no structural diagonal entry.
    """
    if m.n_rows != m.n_cols:
        raise ValueError("matrix must be square")
    n = m.n_rows
    if isinstance(order, str):
        if order == "mindeg":
            perm = minimum_degree_order(m)
        elif order == "natural":
            perm = np.arange(n, dtype=np.int64)
        else:
            raise ValueError(f"unknown ordering {order!r}")
    else:
        perm = np.asarray(order, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(n)):
            raise ValueError("explicit order must be a permutation of 0..n-1")

    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)

    # permuted symmetrized adjacency + structural diagonal check
    has_diag = np.zeros(n, dtype=bool)
    adj = [set() for _ in range(n)]
    for i in range(n):
        cols, _ = m.row(i)
        pi = inv[i]
        for j in cols:
            pj = inv[int(j)]
            if pi == pj:
                has_diag[pi] = True
            else:
                adj[pi].add(int(pj))
                adj[pj].add(int(pi))
    for k in range(n):
        if not has_diag[k] and not adj[k]:
            raise StructuralSingularityError(k, f"empty pivot row/column at pivot {k} (original {perm[k]})")
        if not has_diag[k]:
            raise StructuralSingularityError(k, f"no structural diagonal at pivot {k} (original {perm[k]})")

    original = [set(a) for a in adj]
    reach = adj
    fill = []
    for k in range(n):
        nbrs = sorted(j for j in reach[k] if j > k)
        for a_i, ja in enumerate(nbrs):
            for jb in nbrs[a_i + 1:]:
                if jb not in reach[ja]:
                    reach[ja].add(jb)
                    reach[jb].add(ja)
                    oa, ob = int(perm[ja]), int(perm[jb])
                    fill.append((min(oa, ob), max(oa, ob)))

    lower_rows = tuple(tuple(sorted(j for j in reach[k] if j < k)) for k in range(n))
    upper_rows = tuple(tuple([k] + sorted(j for j in reach[k] if j > k)) for k in range(n))

    # level scheduling: longest-path depth in the elimination dependency DAG
    level_of = np.zeros(n, dtype=np.int64)
    for k in range(n):
        if lower_rows[k]:
            level_of[k] = 1 + max(level_of[j] for j in lower_rows[k])
    n_levels = int(level_of.max()) + 1 if n else 0
    levels = [[] for _ in range(n_levels)]
    for k in range(n):
        levels[level_of[k]].append(k)

    return SymbolicLU(
        n=n,
        perm=perm,
        lower_rows=lower_rows,
        upper_rows=upper_rows,
        fill_edges=tuple(sorted(set(fill))),
        levels=tuple(tuple(lv) for lv in levels),
    )


@dataclass(frozen=True)
class LUFactors:
    """Unit-lower / upper triangular factors of a symmetrically permuted matrix.

    lower @ upper equals the input with `perm` applied to both rows and
    columns, up to factorization roundoff.
    """

    lower: SparseMatrix
    upper: SparseMatrix
    perm: np.ndarray
    fill_edges: tuple
    levels: tuple
    symbolic: SymbolicLU = field(repr=False)

    @property
    def n(self):
        return self.lower.n_rows


def numeric_factorize(m, symbolic=None):
    """Factor `m` on a precomputed pattern (diagonal pivots, no dropping).

    Computes unit-lower L and upper U with L @ U == m[perm][:, perm] to
    roundoff.  Raises NumericalSingularityError when a pivot magnitude
    falls below PIVOT_THRESHOLD.
    """
    if symbolic is None:
        symbolic = symbolic_factorize(m)
    n = symbolic.n
    if m.n_rows != n or m.n_cols != n:
        raise ValueError("matrix shape does not match symbolic pattern")
    perm = symbolic.perm
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)

    # permuted rows of m scattered once into (cols, vals) per pivot row
    a_rows = [{} for _ in range(n)]
    for i in range(n):
        cols, vals = m.row(i)
        pr = a_rows[inv[i]]
        for j, v in zip(cols, vals):
            pr[int(inv[int(j)])] = float(v)

    udiag = np.zeros(n)
    urows_vals = []
    lrows_vals = []
    work = np.zeros(n)
    for k in range(n):
        lcols = symbolic.lower_rows[k]
        ucols = symbolic.upper_rows[k]
        touched = list(lcols) + list(ucols)
        for j in touched:
            work[j] = 0.0
        for j, v in a_rows[k].items():
            work[j] = v
        lvals = np.empty(len(lcols))
        for idx, j in enumerate(lcols):
            ljk = work[j] / udiag[j]
            lvals[idx] = ljk
            ucols_j = symbolic.upper_rows[j]
            uvals_j = urows_vals[j]
            for c_idx in range(1, len(ucols_j)):     # skip diagonal at position 0
                work[ucols_j[c_idx]] -= ljk * uvals_j[c_idx]
        uvals = np.array([work[j] for j in ucols])
        pivot = uvals[0]
        if abs(pivot) < PIVOT_THRESHOLD:
            raise NumericalSingularityError(k, pivot)
        udiag[k] = pivot
        urows_vals.append(uvals)
        lrows_vals.append(lvals)

    lower = _rows_to_csr(n, [(k,) + tuple(symbolic.lower_rows[k]) for k in range(n)],
                         [np.concatenate(([1.0], lrows_vals[k])) for k in range(n)],
                         sort_needed=True)
    upper = _rows_to_csr(n, symbolic.upper_rows, urows_vals, sort_needed=False)
    return LUFactors(
        lower=lower,
        upper=upper,
        perm=perm,
        fill_edges=symbolic.fill_edges,
        levels=symbolic.levels,
        symbolic=symbolic,
    )


def _rows_to_csr(n, rows_cols, rows_vals, sort_needed):
    indptr = np.zeros(n + 1, dtype=np.int64)
    cols_all = []
    vals_all = []
    for k in range(n):
        cols = np.asarray(rows_cols[k], dtype=np.int64)
        vals = np.asarray(rows_vals[k], dtype=np.float64)
        if sort_needed and len(cols) > 1:
            srt = np.argsort(cols, kind="stable")
            cols, vals = cols[srt], vals[srt]
        cols_all.append(cols)
        vals_all.append(vals)
        indptr[k + 1] = indptr[k] + len(cols)
    return SparseMatrix(
        n, n, indptr,
        np.concatenate(cols_all) if cols_all else np.array([], dtype=np.int64),
        np.concatenate(vals_all) if vals_all else np.array([]),
    )


def solve(factors, rhs):
    """Solve m @ x = rhs using the factors of m.

    Forward/back substitution row by row; rows inside one elimination level
    are independent, so any intra-level order gives the same result.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = factors.n
    if rhs.shape != (n,):
        raise ValueError(f"rhs length {rhs.shape} does not match system size {n}")
    perm = factors.perm
    y = rhs[perm].copy()
    lower, upper = factors.lower, factors.upper
    for i in range(n):
        cols, vals = lower.row(i)
        for j, v in zip(cols, vals):
            if j < i:
                y[i] -= v * y[j]
    for i in range(n - 1, -1, -1):
        cols, vals = upper.row(i)
        acc = y[i]
        diag = vals[0]
        for idx in range(1, len(cols)):
            acc -= vals[idx] * y[cols[idx]]
        y[i] = acc / diag
    x = np.empty(n)
    x[perm] = y
    return x


def factorize(m, order="mindeg"):
    """Convenience: symbolic + numeric factorization in one call."""
    return numeric_factorize(m, symbolic_factorize(m, order=order))
