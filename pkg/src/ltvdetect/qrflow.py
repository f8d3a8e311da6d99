"""Continuous QR triangularisation of an LTV system.

For a fundamental solution ``X = Q R`` the orthogonal factor obeys ``Q' = Q S``
where ``S`` is the skew matrix whose strict lower triangle copies that of
``Q^T A Q``. The coordinates ``z = Q^T x`` then evolve under the upper
triangular ``B = Q^T A Q - S``, and the log-diagonal of ``R`` integrates the
diagonal of ``B``. Only ``Q``, ``B`` and ``nu = log diag R`` are kept; ``R``
itself would overflow on long horizons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionError, FlowError, IntegrationOverflowError
from .propagate import _NUDGE, IntegratorSettings, stage_times, step_nodes
from .system import Composite, LtvSystem

DEFAULT_HORIZON = 50.0


def skew_generator(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """``S`` with ``s_ij = q_i^T A q_j`` for ``i > j``, ``S = -S^T`` and zero diagonal."""
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or Q.shape != A.shape:
        raise DimensionError(f"skew_generator needs square A and Q of equal shape, got {A.shape}, {Q.shape}")
    lower = np.tril(Q.T @ A @ Q, -1)
    return lower - lower.T


def _skew_batch(Q, A):
    W = np.swapaxes(Q, 1, 2) @ A @ Q
    lower = np.tril(W, -1)
    return lower - np.swapaxes(lower, 1, 2), W


def _triangular_from(W):
    """``W - S`` for ``S`` built from the strict lower part of ``W``; exactly upper triangular."""
    return np.triu(W) + np.triu(np.swapaxes(W, 1, 2), 1)


def positive_qr(X0: np.ndarray):
    """QR factorisation with ``diag(R) > 0``."""
    Q, R = np.linalg.qr(np.asarray(X0, dtype=float))
    d = np.sign(np.diag(R))
    if np.any(d == 0):
        raise DimensionError("initial fundamental matrix is singular")
    return Q * d, d[:, None] * R


@dataclass(frozen=True, eq=False)
class QrFlowResult:
    system: LtvSystem
    times: np.ndarray
    Q: np.ndarray
    B: np.ndarray
    nu: np.ndarray
    orthogonality: np.ndarray
    lower_defect: float
    max_reorth_change: float

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def n(self) -> int:
        return self.Q.shape[1]

    def _nearest(self, ts):
        i = np.clip(np.searchsorted(self.times, ts), 1, self.times.size - 1)
        left = ts - self.times[i - 1] < self.times[i] - ts
        return np.where(left, i - 1, i)

    def q_at(self, ts) -> np.ndarray:
        """``Q(t)`` off the grid by one RK4 sub-step from the nearest stored node."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        i = self._nearest(ts)
        Q = self.Q[i]
        dt = ts - self.times[i]
        moving = dt != 0
        if not np.any(moving):
            return Q.copy()
        Q = Q.copy()
        q0, h, t0 = Q[moving], dt[moving], self.times[i][moving]
        A = self.system.A
        A1 = A.evaluate_many(t0 + _NUDGE * h)
        A2 = A.evaluate_many(t0 + 0.5 * h)
        A4 = A.evaluate_many(t0 + (1.0 - _NUDGE) * h)
        Q[moving] = _kernels.qr_substeps(np.ascontiguousarray(q0), np.ascontiguousarray(A1),
                                         np.ascontiguousarray(A2), np.ascontiguousarray(A4), h)
        return Q

    def b_at(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        Q = self.q_at(ts)
        W = np.swapaxes(Q, 1, 2) @ self.system.A.evaluate_many(ts) @ Q
        return _triangular_from(W)

    def nu_at(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        return np.stack([np.interp(ts, self.times, self.nu[:, i]) for i in range(self.n)], axis=1)

    def diag_b(self) -> np.ndarray:
        return np.diagonal(self.B, axis1=1, axis2=2)


def run_qr_flow(sys: LtvSystem, X0=None, horizon: float | None = None,
                settings: IntegratorSettings | None = None, *, reorth_every: int = 100,
                drift_tol: float = 1e-9, max_change: float = 1e-3) -> QrFlowResult:
    """Integrate the orthogonal flow and the log-diagonal growth on ``[0, horizon]``."""
    settings = settings or IntegratorSettings()
    n = sys.n
    if horizon is None:
        horizon = min(sys.horizon, DEFAULT_HORIZON)
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    X0 = np.eye(n) if X0 is None else np.asarray(X0, dtype=float)
    if X0.shape != (n, n):
        raise DimensionError(f"X0 must be {n}x{n}, got {X0.shape}")
    Q0, R0 = positive_qr(X0)
    nu0 = np.log(np.diag(R0))

    h = settings.step_for(sys.bound_a)
    nodes = step_nodes(0.0, horizon, h, sys.A.breakpoints())
    t1s, tms, t4s = stage_times(nodes)
    A = sys.A
    Qs, nus, _, change, bad = _kernels.qr_flow(
        A.evaluate_many(t1s), A.evaluate_many(tms), A.evaluate_many(t4s),
        np.diff(nodes), np.ascontiguousarray(Q0), nu0, int(reorth_every), float(drift_tol),
    )
    if bad >= 0:
        raise IntegrationOverflowError(float(nodes[bad + 1]))
    if change > max_change:
        raise FlowError(f"re-orthonormalisation moved Q by {change:.3g} > {max_change:.3g}")

    W = np.swapaxes(Qs, 1, 2) @ A.evaluate_many(nodes) @ Qs
    S = _skew_batch(Qs, A.evaluate_many(nodes))[0]
    raw = W - S
    lower_defect = float(np.abs(np.tril(raw, -1)).max()) if n > 1 else 0.0
    if lower_defect > 1e-8:
        raise FlowError(f"assembled B has strictly-lower entries of size {lower_defect:.3g}")
    B = np.triu(raw)
    gram = np.swapaxes(Qs, 1, 2) @ Qs - np.eye(n)
    ortho = np.linalg.norm(gram, 2, axis=(1, 2))
    return QrFlowResult(sys, nodes, Qs, B, nus, ortho, lower_defect, float(change))


def triangularized_system(sys: LtvSystem, flow: QrFlowResult) -> LtvSystem:
    """The system ``(B(t), C(t) Q(t))`` in the coordinates ``z = Q^T x``."""
    if flow.system is not sys and (flow.system.A is not sys.A):
        raise ValueError("flow was not produced from this system")
    n, p = sys.n, sys.p
    zeros = np.zeros((n, n), dtype=bool)
    zeros[np.tril_indices(n, -1)] = True
    bound_b = float(np.linalg.norm(flow.B, 2, axis=(1, 2)).max())
    A_tri = Composite(n, n, flow.b_at, t_min=0.0, t_max=flow.horizon,
                      bound_value=bound_b, breaks=sys.A.breakpoints(), zeros=zeros)
    C_tri = Composite(p, n, lambda ts: sys.C.evaluate_many(ts) @ flow.q_at(ts),
                      t_min=0.0, t_max=min(flow.horizon, sys.C.t_max),
                      bound_value=sys.bound_c, breaks=sys.breakpoints())
    name = f"{sys.name} (triangularized)" if sys.name else "triangularized"
    return LtvSystem(A_tri, C_tri, name=name)
