"""Block-diagonal reduction of systems with an exponential dichotomy.

With a fundamental solution ``X`` and the projector ``P = diag(0, I_k)`` the
symmetric positive definite ``T`` with
``T^2 = P X^T X P + (I - P) X^T X (I - P)`` gives the Lyapunov transformation
``S = X T^{-1}``, and ``x = S z`` turns ``x' = A x`` into ``z' = D z`` with
``D = S^{-1}(A S - S')`` block diagonal.

For upper block-triangular inputs the transformation keeps an identity leading
block. Its off-diagonal column ``X12`` is the decaying solution of
``X12' = B11 X12 + B12 X22`` which is obtained by a backward sweep from a
truncation time far beyond the horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, DimensionError, FormError, TruncationError
from .propagate import IntegratorSettings, linear_solution
from .system import BlockPartition, CoefficientFunction, Composite, LtvSystem, Sampled, _block_bound

OFFDIAG_TOL = 1e-6
TRUNCATION_TOL = 1e-6
DEFAULT_SPACING = 1e-3


def _psd_sqrt(M):
    """Batched symmetric PSD square root and its inverse; eigenvalues clipped at 0."""
    w, V = np.linalg.eigh(0.5 * (M + np.swapaxes(M, -1, -2)))
    if np.any(w[..., 0] < 1e-12 * w[..., -1]):
        i = int(np.argmin(w[..., 0] / w[..., -1]))
        raise ConditioningError(f"square root argument numerically singular at grid index {i}")
    w = np.maximum(w, 0.0)
    r = np.sqrt(w)
    Vt = np.swapaxes(V, -1, -2)
    return (V * r[..., None, :]) @ Vt, (V / r[..., None, :]) @ Vt


@dataclass(frozen=True)
class BlockDiagReduction:
    times: np.ndarray
    S: np.ndarray
    Sinv: np.ndarray
    D: np.ndarray               # off-diagonal blocks zeroed
    part: BlockPartition
    offdiag_max: float          # largest off-diagonal block norm before zeroing
    d1_defect: float | None     # max ||D1 - B11|| (triangular route only)
    truncation: float | None = None
    truncation_change: float | None = None

    @property
    def sup_s(self) -> float:
        return float(np.linalg.norm(self.S, 2, axis=(1, 2)).max())

    @property
    def sup_sinv(self) -> float:
        return float(np.linalg.norm(self.Sinv, 2, axis=(1, 2)).max())

    @property
    def sup_sdot(self) -> float:
        Sdot = np.gradient(self.S, self.times, axis=0, edge_order=2)
        return float(np.linalg.norm(Sdot, 2, axis=(1, 2)).max())

    @property
    def inverse_defect(self) -> float:
        return float(np.abs(self.S @ self.Sinv - np.eye(self.part.n)).max())

    def coefficient(self) -> Sampled:
        return Sampled(self.times, self.D)

    def transform(self) -> Sampled:
        return Sampled(self.times, self.S)

    def reduced_system(self, sys: LtvSystem) -> LtvSystem:
        """``(D, C S)`` on the reduction grid."""
        CS = sys.C.evaluate_many(self.times) @ self.S
        name = f"{sys.name} (block diagonal)" if sys.name else "block diagonal"
        return LtvSystem(Sampled(self.times, self.D), Sampled(self.times, CS), name=name)

    def to_dict(self):
        return {
            "k": self.part.k,
            "sup_S": self.sup_s,
            "sup_Sinv": self.sup_sinv,
            "sup_Sdot": self.sup_sdot,
            "offdiag_max": self.offdiag_max,
            "d1_defect": self.d1_defect,
            "inverse_defect": self.inverse_defect,
            "truncation": self.truncation,
            "truncation_change": self.truncation_change,
        }


def _split_offdiag(D, part):
    m = part.n - part.k
    off = np.zeros(D.shape[0])
    if 0 < m < part.n:
        off = np.maximum(np.linalg.norm(D[:, :m, m:], 2, axis=(1, 2)),
                         np.linalg.norm(D[:, m:, :m], 2, axis=(1, 2)))
    clean = D.copy()
    clean[:, :m, m:] = 0.0
    clean[:, m:, :m] = 0.0
    return clean, float(off.max()) if off.size else 0.0


def _partition_of(P, n):
    P = np.asarray(P, dtype=float)
    k = int(round(np.trace(P)))
    part = BlockPartition(n, k)
    if P.shape != (n, n) or np.abs(P - part.projector).max() > 1e-12:
        raise FormError("projector must be in the normal form diag(0, I_k)")
    return part


def coppel_transform(times, X, P, A: CoefficientFunction | None = None,
                     offdiag_tol: float = OFFDIAG_TOL) -> BlockDiagReduction:
    """Reduction from fundamental-solution samples ``X(times)``.

    ``D`` is ``S^{-1}(A S - S')`` when ``A`` is given and ``T' T^{-1}`` otherwise
    (the two agree because ``A X = X'``); derivatives are second-order
    differences on ``times``.
    """
    times = np.asarray(times, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 3 or X.shape[0] != times.size or X.shape[1] != X.shape[2]:
        raise DimensionError(f"X must have shape (len(times), n, n), got {X.shape}")
    if times.size < 3:
        raise ValueError("need at least three grid times")
    n = X.shape[1]
    part = _partition_of(P, n)
    G = np.swapaxes(X, 1, 2) @ X
    # T^2 is block diagonal, so the root is taken (and conditioning judged) per block
    T = np.zeros_like(G)
    Tinv = np.zeros_like(G)
    for blk in (part.lead, part.trail):
        if blk.stop > blk.start:
            T[:, blk, blk], Tinv[:, blk, blk] = _psd_sqrt(G[:, blk, blk])
    S = X @ Tinv
    Sinv = T @ np.linalg.inv(X)
    if A is None:
        Tdot = np.gradient(T, times, axis=0, edge_order=2)
        raw = Tdot @ Tinv
    else:
        Sdot = np.gradient(S, times, axis=0, edge_order=2)
        raw = Sinv @ (A.evaluate_many(times) @ S - Sdot)
    D, off = _split_offdiag(raw, part)
    if off > offdiag_tol:
        raise FormError(f"reduced coefficient has off-diagonal blocks of size {off:.3g} > {offdiag_tol:g}")
    return BlockDiagReduction(times, S, Sinv, D, part, off, None)


def _triangular_assemble(B11, B12, B22, part, times, t_trunc, settings):
    """``S`` and ``Sinv`` on ``times`` for a given truncation time."""
    m, k = part.n - part.k, part.k
    n = part.n
    X22_end = linear_solution(B22, np.eye(k), [0.0, t_trunc], settings)[-1]

    def a_fn(ts):
        out = np.zeros((ts.size, n, n))
        out[:, :m, :m] = B11._eval(ts)
        out[:, :m, m:] = B12._eval(ts)
        out[:, m:, m:] = B22._eval(ts)
        return out

    lo = max(B11.t_min, B12.t_min, B22.t_min)
    hi = min(B11.t_max, B12.t_max, B22.t_max)
    A = Composite(n, n, a_fn, t_min=lo, t_max=hi,
                  bound_value=_block_bound([[B11.bound(), B12.bound()], [0.0, B22.bound()]]),
                  breaks=np.unique(np.concatenate([B11.breakpoints(), B12.breakpoints(), B22.breakpoints()])))
    col0 = np.vstack([np.zeros((m, k)), X22_end])
    back = np.concatenate([[t_trunc], times[::-1]]) if t_trunc > times[-1] else times[::-1]
    sol = linear_solution(A, col0, back, settings)[::-1][: times.size]
    X12, X22 = sol[:, :m, :], sol[:, m:, :]
    N, Ninv = _psd_sqrt(np.swapaxes(X12, 1, 2) @ X12 + np.swapaxes(X22, 1, 2) @ X22)
    S = np.zeros((times.size, n, n))
    S[:, :m, :m] = np.eye(m)
    S[:, :m, m:] = X12 @ Ninv
    S[:, m:, m:] = X22 @ Ninv
    X22inv = np.linalg.inv(X22)
    Sinv = np.zeros_like(S)
    Sinv[:, :m, :m] = np.eye(m)
    Sinv[:, :m, m:] = -X12 @ X22inv
    Sinv[:, m:, m:] = N @ X22inv
    return A, S, Sinv


def triangular_reduction(B11: CoefficientFunction, B12: CoefficientFunction, B22: CoefficientFunction,
                         part: BlockPartition, horizon: float, t_trunc: float | None = None, *,
                         alpha: float | None = None, spacing: float = DEFAULT_SPACING,
                         settings: IntegratorSettings | None = None,
                         offdiag_tol: float = OFFDIAG_TOL,
                         truncation_tol: float = TRUNCATION_TOL) -> BlockDiagReduction:
    """Reduction of ``[[B11, B12], [0, B22]]`` on ``[0, horizon]``.

    ``B11`` is taken to be anti-stable and ``B22`` uniformly exponentially
    stable. The truncation time defaults to ``horizon + 10 / alpha``. The
    sweep is repeated with the truncation time doubled (or, when the
    coefficients are not defined that far, with the tail beyond the horizon
    doubled) and the change in ``S`` must stay below ``truncation_tol``.
    """
    m, k = part.n - part.k, part.k
    if B11.shape != (m, m) or B12.shape != (m, k) or B22.shape != (k, k):
        raise DimensionError(f"block shapes {B11.shape}, {B12.shape}, {B22.shape} do not match partition n={part.n}, k={k}")
    if m == 0 or k == 0:
        raise ValueError("triangular reduction needs both blocks nonempty")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if t_trunc is None:
        if alpha is None or alpha <= 0:
            raise ValueError("give either a truncation time or a positive dichotomy rate")
        t_trunc = horizon + 10.0 / alpha
    if t_trunc < horizon:
        raise ValueError("truncation time must not precede the horizon")
    domain = min(B11.t_max, B12.t_max, B22.t_max)
    if t_trunc > domain:
        raise ValueError(f"truncation time {t_trunc:g} beyond coefficient domain {domain:g}")
    doubled = 2.0 * t_trunc if 2.0 * t_trunc <= domain else min(domain, 2.0 * t_trunc - horizon)

    times = np.linspace(0.0, horizon, max(3, int(np.ceil(horizon / spacing)) + 1))
    A, S, Sinv = _triangular_assemble(B11, B12, B22, part, times, t_trunc, settings)
    _, S2, _ = _triangular_assemble(B11, B12, B22, part, times, doubled, settings)
    change = float(np.abs(S2 - S).max())
    if change > truncation_tol:
        raise TruncationError(
            f"S changes by {change:.3g} > {truncation_tol:g} when the truncation time "
            f"moves from {t_trunc:g} to {doubled:g}"
        )
    Sdot = np.gradient(S, times, axis=0, edge_order=2)
    raw = Sinv @ (A.evaluate_many(times) @ S - Sdot)
    D, off = _split_offdiag(raw, part)
    d1 = float(np.linalg.norm(raw[:, :m, :m] - B11.evaluate_many(times), 2, axis=(1, 2)).max())
    if off > offdiag_tol:
        raise FormError(f"reduced coefficient has off-diagonal blocks of size {off:.3g} > {offdiag_tol:g}")
    if d1 > offdiag_tol:
        raise FormError(f"leading reduced block deviates from B11 by {d1:.3g}")
    return BlockDiagReduction(times, S, Sinv, D, part, off, d1, float(t_trunc), change)
