"""Compiled inner loops for the sequential integrators.

Stage values of the coefficient matrices are evaluated vectorised in Python and
handed in as arrays; only the strictly sequential recursions live here.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def chain(M, X0, record):
    """Left-multiply ``X0`` by ``M[0], M[1], ...``; store states at ``record`` step indices.

    ``record`` is a sorted array of step counts (0 means the initial state).
    Returns the recorded states and the index of the first non-finite step (-1 if none).
    """
    m = M.shape[0]
    out = np.empty((record.size, X0.shape[0], X0.shape[1]))
    X = X0.copy()
    r = 0
    while r < record.size and record[r] == 0:
        out[r] = X
        r += 1
    bad = -1
    for j in range(m):
        X = _mm(M[j], X)
        if bad < 0 and not np.all(np.isfinite(X)):
            bad = j
            break
        while r < record.size and record[r] == j + 1:
            out[r] = X
            r += 1
    return out, bad


@njit(cache=True)
def segment_products(M, seg_end):
    """Products ``M[e_{i}-1] ... M[e_{i-1}]`` for consecutive segment end indices."""
    n = M.shape[1]
    out = np.empty((seg_end.size, n, n))
    start = 0
    for i in range(seg_end.size):
        F = np.eye(n)
        for j in range(start, seg_end[i]):
            F = _mm(M[j], F)
        out[i] = F
        start = seg_end[i]
    return out


@njit(cache=True)
def _mm(X, Y):
    # explicit loops: BLAS call overhead dominates for the tiny matrices used here
    n, k, m = X.shape[0], X.shape[1], Y.shape[1]
    Z = np.zeros((n, m))
    for i in range(n):
        for l in range(k):
            x = X[i, l]
            for j in range(m):
                Z[i, j] += x * Y[l, j]
    return Z


@njit(cache=True)
def _skew(Q, A):
    W = _mm(Q.T, _mm(A, Q))
    n = W.shape[0]
    S = np.zeros_like(W)
    for i in range(n):
        for j in range(i):
            S[i, j] = W[i, j]
            S[j, i] = -W[i, j]
    return S, W


@njit(cache=True)
def _mgs(Q):
    n = Q.shape[1]
    V = np.ascontiguousarray(Q.T)  # row j holds column j of Q
    for j in range(n):
        for i in range(j):
            V[j] -= np.dot(V[i], V[j]) * V[i]
        V[j] /= np.sqrt(np.dot(V[j], V[j]))
    return np.ascontiguousarray(V.T)


@njit(cache=True)
def _drift(Q):
    G = _mm(Q.T, Q)
    n = G.shape[0]
    s = 0.0
    for i in range(n):
        for j in range(n):
            d = G[i, j] - (1.0 if i == j else 0.0)
            s += d * d
    return np.sqrt(s)


@njit(cache=True)
def qr_flow(A1, A2, A4, h, Q0, nu0, reorth_every, drift_tol):
    """RK4 on ``Q' = Q S(Q, A)`` and ``nu' = diag(Q^T A Q)``.

    Returns ``(Q, nu, drift, max_reorth_change, bad_step)`` with ``Q`` recorded at
    every node. ``drift`` is the Frobenius orthogonality defect before any
    re-orthonormalisation at that node.
    """
    m = h.size
    n = Q0.shape[0]
    Qs = np.empty((m + 1, n, n))
    nus = np.empty((m + 1, n))
    drift = np.empty(m + 1)
    Qs[0] = Q0
    nus[0] = nu0
    drift[0] = _drift(Q0)
    Q = Q0.copy()
    nu = nu0.copy()
    worst_change = 0.0
    bad = -1
    for j in range(m):
        hj = h[j]
        S1, W1 = _skew(Q, A1[j])
        K1 = _mm(Q, S1)
        Qb = Q + 0.5 * hj * K1
        S2, W2 = _skew(Qb, A2[j])
        K2 = _mm(Qb, S2)
        Qc = Q + 0.5 * hj * K2
        S3, W3 = _skew(Qc, A2[j])
        K3 = _mm(Qc, S3)
        Qd = Q + hj * K3
        S4, W4 = _skew(Qd, A4[j])
        K4 = _mm(Qd, S4)
        Q = Q + hj / 6.0 * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        for i in range(n):
            nu[i] += hj / 6.0 * (W1[i, i] + 2.0 * W2[i, i] + 2.0 * W3[i, i] + W4[i, i])
        if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(nu))):
            bad = j
            break
        d = _drift(Q)
        drift[j + 1] = d
        if (j + 1) % reorth_every == 0 or d > drift_tol:
            Qn = _mgs(Q)
            change = np.max(np.abs(Qn - Q))
            if change > worst_change:
                worst_change = change
            Q = Qn
        Qs[j + 1] = Q
        nus[j + 1] = nu
    return Qs, nus, drift, worst_change, bad


@njit(cache=True)
def _flow_rhs(Q, A, AQ, W, K):
    """``K = Q S(Q, A)`` written into preallocated buffers."""
    n = Q.shape[0]
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for l in range(n):
                acc += A[i, l] * Q[l, j]
            AQ[i, j] = acc
    for i in range(n):
        for j in range(i):
            acc = 0.0
            for l in range(n):
                acc += Q[l, i] * AQ[l, j]
            W[i, j] = acc            # strict lower part of Q^T A Q
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for l in range(n):
                # S[l, j] = W[l, j] below the diagonal, -W[j, l] above
                if l > j:
                    acc += Q[i, l] * W[l, j]
                elif l < j:
                    acc -= Q[i, l] * W[j, l]
            K[i, j] = acc


@njit(cache=True)
def qr_substeps(Q0, A1, A2, A4, h):
    """One RK4 step of the orthogonal flow for each batch entry (no re-orthonormalisation)."""
    nb, n = Q0.shape[0], Q0.shape[1]
    out = np.empty_like(Q0)
    AQ = np.empty((n, n))
    W = np.zeros((n, n))
    K1 = np.empty((n, n))
    K2 = np.empty((n, n))
    K3 = np.empty((n, n))
    K4 = np.empty((n, n))
    Y = np.empty((n, n))
    for b in range(nb):
        Q = Q0[b]
        hb = h[b]
        _flow_rhs(Q, A1[b], AQ, W, K1)
        for i in range(n):
            for j in range(n):
                Y[i, j] = Q[i, j] + 0.5 * hb * K1[i, j]
        _flow_rhs(Y, A2[b], AQ, W, K2)
        for i in range(n):
            for j in range(n):
                Y[i, j] = Q[i, j] + 0.5 * hb * K2[i, j]
        _flow_rhs(Y, A2[b], AQ, W, K3)
        for i in range(n):
            for j in range(n):
                Y[i, j] = Q[i, j] + hb * K3[i, j]
        _flow_rhs(Y, A4[b], AQ, W, K4)
        for i in range(n):
            for j in range(n):
                out[b, i, j] = Q[i, j] + hb / 6.0 * (K1[i, j] + 2.0 * K2[i, j] + 2.0 * K3[i, j] + K4[i, j])
    return out


@njit(cache=True)
def _ric_rhs(B, G, P, Qw):
    # P B^T = (B P)^T only for symmetric P, so the stage value is symmetrised first
    Ps = 0.5 * (P + P.T)
    BP = _mm(B, Ps)
    return BP + BP.T - _mm(Ps, _mm(G, Ps)) + Qw


@njit(cache=True)
def riccati(B1, B2, B4, G1, G2, G4, Qw, h, P0, cap):
    """RK4 on ``P' = B P + P B^T - P G P + Qw`` with per-step symmetrisation.

    ``G = C^T R^{-1} C`` at the stage times. Returns ``(P, asym, bad_step)`` where
    ``asym`` is the pre-symmetrisation defect and ``bad_step`` the first step whose
    largest eigenvalue bound exceeded ``cap`` (-1 if none).
    """
    m = h.size
    r = P0.shape[0]
    Ps = np.empty((m + 1, r, r))
    asym = np.zeros(m + 1)
    Ps[0] = P0
    P = P0.copy()
    bad = -1
    for j in range(m):
        hj = h[j]
        K1 = _ric_rhs(B1[j], G1[j], P, Qw)
        Pb = P + 0.5 * hj * K1
        K2 = _ric_rhs(B2[j], G2[j], Pb, Qw)
        Pc = P + 0.5 * hj * K2
        K3 = _ric_rhs(B2[j], G2[j], Pc, Qw)
        Pd = P + hj * K3
        K4 = _ric_rhs(B4[j], G4[j], Pd, Qw)
        P = P + hj / 6.0 * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        asym[j + 1] = np.max(np.abs(P - P.T))
        P = 0.5 * (P + P.T)
        Ps[j + 1] = P
        if not np.all(np.isfinite(P)):
            bad = j + 1
            break
        # trace >= largest eigenvalue, so the eigensolver only runs near the cap
        if np.trace(P) > cap and np.linalg.eigvalsh(P)[-1] > cap:
            bad = j + 1
            break
    return Ps, asym, bad
