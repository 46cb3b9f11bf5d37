"""Independent reference implementations used only to check the library.

Everything here deliberately takes the dumb route: dense elimination,
full Newton-Raphson, exhaustive enumeration.  None of it shares code with
the modules under test.
"""

import itertools

import numpy as np


# ---------------------------------------------------------------------------
# dense linear algebra oracles


def dense_symbolic_fill(pattern, order):
    """Fill edges of no-pivot elimination on a symmetrized boolean pattern.

    Returns undirected (i, j) pairs, i < j, in original coordinates.
    """
    n = pattern.shape[0]
    order = np.asarray(order)
    b = pattern | pattern.T
    b = b[np.ix_(order, order)].copy()
    orig = b.copy()
    for k in range(n):
        below = [i for i in range(k + 1, n) if b[i, k]]
        for i in below:
            for j in below:
                if i != j:
                    b[i, j] = True
    edges = set()
    for i in range(n):
        for j in range(i + 1, n):
            if b[i, j] and not orig[i, j]:
                oi, oj = int(order[i]), int(order[j])
                edges.add((min(oi, oj), max(oi, oj)))
    return edges


def dense_lu_nopivot(a):
    """Doolittle LU without pivoting; returns (L, U) dense."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    lower = np.eye(n)
    upper = np.zeros_like(a)
    for k in range(n):
        upper[k, k:] = a[k, k:] - lower[k, :k] @ upper[:k, k:]
        if k + 1 < n:
            lower[k + 1:, k] = (a[k + 1:, k] - lower[k + 1:, :k] @ upper[:k, k]) / upper[k, k]
    return lower, upper


def dense_solve(a, b):
    return np.linalg.solve(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


# ---------------------------------------------------------------------------
# power flow oracle: full Newton-Raphson in polar coordinates


def newton_raphson_pf(ybus, p_spec, q_spec, v0, slack, pv, pq, tol=1e-10, max_iter=40):
    """Dense-Jacobian Newton power flow.

    ybus is a dense complex matrix; p_spec/q_spec are net injections (per
    unit); v0 the complex start voltages.  PV magnitudes and the slack
    voltage are held.  Returns (v_complex, converged, iterations).
    """
    n = ybus.shape[0]
    v = np.array(v0, dtype=complex)
    pvpq = np.concatenate([pv, pq]).astype(int)
    pq = np.asarray(pq, dtype=int)
    for it in range(max_iter):
        s_calc = v * np.conj(ybus @ v)
        dp = p_spec[pvpq] - s_calc[pvpq].real
        dq = q_spec[pq] - s_calc[pq].imag
        mism = np.concatenate([dp, dq])
        if np.max(np.abs(mism)) < tol:
            return v, True, it
        vm = np.abs(v)
        va = np.angle(v)
        # partial derivatives of S wrt angle and magnitude
        ibus = ybus @ v
        diag_v = np.diag(v)
        diag_i = np.diag(ibus)
        diag_e = np.diag(v / vm)
        ds_dva = 1j * diag_v @ np.conj(diag_i - ybus @ diag_v)
        ds_dvm = diag_v @ np.conj(ybus @ diag_e) + np.conj(diag_i) @ diag_e
        j11 = ds_dva[np.ix_(pvpq, pvpq)].real
        j12 = ds_dvm[np.ix_(pvpq, pq)].real
        j21 = ds_dva[np.ix_(pq, pvpq)].imag
        j22 = ds_dvm[np.ix_(pq, pq)].imag
        jac = np.block([[j11, j12], [j21, j22]])
        dx = np.linalg.solve(jac, mism)
        va[pvpq] += dx[:len(pvpq)]
        vm[pq] += dx[len(pvpq):]
        v = vm * np.exp(1j * va)
    return v, False, max_iter


# ---------------------------------------------------------------------------
# optimization oracles


def enumerate_binary_models(objective, constraints, n_binary, sense="min"):
    """Best objective of a pure-binary model by exhaustive enumeration.

    objective: array of coefficients.  constraints: list of
    (coeffs, relation, rhs) with relation in {"<=", "=", ">="}.
    Returns (best_value, best_point) or (None, None) when infeasible.
    """
    best_val, best_x = None, None
    for bits in itertools.product((0.0, 1.0), repeat=n_binary):
        x = np.array(bits)
        ok = True
        for coeffs, rel, rhs in constraints:
            lhs = float(np.dot(coeffs, x))
            if rel == "<=" and lhs > rhs + 1e-9:
                ok = False
            elif rel == ">=" and lhs < rhs - 1e-9:
                ok = False
            elif rel == "=" and abs(lhs - rhs) > 1e-9:
                ok = False
            if not ok:
                break
        if not ok:
            continue
        val = float(np.dot(objective, x))
        if best_val is None or (val < best_val if sense == "min" else val > best_val):
            best_val, best_x = val, x
    return best_val, best_x
