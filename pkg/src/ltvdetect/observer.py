"""Observer gains from the filter Riccati equation and certified error decay.

The gain is built for the leading (anti-stable) block only and padded with
zeros, so the error dynamics of ``A - L C`` keep the block-triangular shape and
their trailing block is the stable ``B22`` (or ``D2``) untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .dichotomy import (CertificationGrid, _declared_pairs, bound_constant, bound_residual,
                        fit_rate)
from .errors import DimensionError, DivergenceError
from .propagate import IntegratorSettings, stage_times, step_nodes
from .reduce import BlockDiagReduction
from .system import CoefficientFunction, Constant, LtvSystem, Sampled

DIVERGENCE_CAP = 1e8


def _spd(M, size, label):
    M = np.eye(size) if M is None else np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape != (size, size):
        raise DimensionError(f"{label} must be {size}x{size}, got {M.shape}")
    if np.abs(M - M.T).max() > 1e-12 or np.linalg.eigvalsh(M)[0] <= 0:
        raise ValueError(f"{label} must be symmetric positive definite")
    return M


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    times: np.ndarray
    P: np.ndarray               # (len(times), m, m)
    Q_w: np.ndarray
    R_v: np.ndarray
    C1: CoefficientFunction
    burn_in: float
    asymmetry: float            # largest pre-symmetrisation defect

    def _after(self):
        return self.P[self.times >= self.times[0] + self.burn_in]

    @property
    def lambda_sup(self) -> float:
        return float(np.linalg.eigvalsh(self._after())[:, -1].max())

    @property
    def lambda_inf(self) -> float:
        return float(np.linalg.eigvalsh(self._after())[:, 0].min())

    def gain_samples(self) -> np.ndarray:
        """``L1 = P C1^T R^{-1}`` on the solution grid."""
        C = self.C1.evaluate_many(self.times)
        return self.P @ np.swapaxes(C, 1, 2) @ np.linalg.inv(self.R_v)

    def to_dict(self):
        return {
            "horizon": float(self.times[-1]),
            "burn_in": self.burn_in,
            "lambda_sup": self.lambda_sup,
            "lambda_inf": self.lambda_inf,
            "P_final": self.P[-1].tolist(),
            "asymmetry": self.asymmetry,
        }


def solve_filter_riccati(B11: CoefficientFunction, C1: CoefficientFunction, Q_w=None, R_v=None,
                         P0=None, horizon: float = 50.0,
                         settings: IntegratorSettings | None = None,
                         burn_in: float | None = None) -> RiccatiSolution:
    """Integrate ``P' = B P + P B^T - P C^T R^{-1} C P + Q_w`` forward from ``P0``."""
    m = B11.rows
    if B11.cols != m or C1.cols != m:
        raise DimensionError(f"B11 {B11.shape} and C1 {C1.shape} are inconsistent")
    if horizon <= 0 or horizon > min(B11.t_max, C1.t_max) + 1e-9:
        raise ValueError(f"horizon {horizon:g} outside the coefficient domain")
    Q_w = _spd(Q_w, m, "Q_w")
    R_v = _spd(R_v, C1.rows, "R_v")
    P0 = _spd(P0, m, "P0")
    settings = settings or IntegratorSettings()
    # the quadratic term stiffens the flow in proportion to |C|^2
    h = settings.step_for(max(B11.bound(), C1.bound() ** 2, 1e-12))
    breaks = np.unique(np.concatenate([B11.breakpoints(), C1.breakpoints()]))
    nodes = step_nodes(0.0, horizon, h, breaks)
    t1, tm, t4 = stage_times(nodes)
    Rinv = np.linalg.inv(R_v)

    def gmat(ts):
        C = C1.evaluate_many(ts)
        return np.swapaxes(C, 1, 2) @ Rinv @ C

    arrays = [np.ascontiguousarray(x) for x in (
        B11.evaluate_many(t1), B11.evaluate_many(tm), B11.evaluate_many(t4),
        gmat(t1), gmat(tm), gmat(t4), Q_w, np.diff(nodes), P0)]
    Ps, asym, bad = _kernels.riccati(*arrays, DIVERGENCE_CAP)
    if bad >= 0:
        raise DivergenceError(
            f"Riccati solution exceeded {DIVERGENCE_CAP:g} at t={nodes[bad]:.6g}; "
            "the pair is likely not uniformly completely observable", t=float(nodes[bad]),
        )
    if burn_in is None:
        bound = B11.bound()
        burn_in = min(0.5 * horizon, 1.0 / bound if bound > 0 else 1.0)
    return RiccatiSolution(nodes, Ps, Q_w, R_v, C1, float(burn_in), float(asym.max()))


def synthesize_gain(target, ric: RiccatiSolution | None, p: int | None = None) -> CoefficientFunction:
    """Structured gain ``L = [L1; 0]`` with ``L1 = P C1^T R^{-1}``.

    ``target`` is the triangular system or a :class:`BlockDiagReduction`; it only
    fixes the state dimension. ``ric=None`` (no leading block) gives ``L = 0``,
    which then needs the output dimension ``p``.
    """
    if isinstance(target, BlockDiagReduction):
        n = target.part.n
    elif isinstance(target, LtvSystem):
        n = target.n
        p = target.p if p is None else p
    else:
        raise TypeError("target must be an LtvSystem or a BlockDiagReduction")
    if ric is None:
        if p is None:
            raise ValueError("output dimension needed for a zero gain")
        return Constant(np.zeros((n, p)))
    L1 = ric.gain_samples()
    m, q = L1.shape[1], L1.shape[2]
    if m > n or (p is not None and q != p):
        raise DimensionError(f"gain block {L1.shape[1:]} does not fit n={n}, p={p}")
    L = np.zeros((L1.shape[0], n, q))
    L[:, :m, :] = L1
    return Sampled(ric.times, L)


@dataclass(frozen=True, eq=False)
class DecayCertificate:
    K: float
    mu: float
    residual: float
    sup_gain: float
    valid: bool
    grid: CertificationGrid
    tol: float
    worst_pair: tuple | None = None
    reason: str = ""

    def to_dict(self):
        return {
            "K_e": self.K if np.isfinite(self.K) else None,
            "mu": self.mu if np.isfinite(self.mu) else None,
            "residual": self.residual,
            "sup_gain": self.sup_gain,
            "valid": self.valid,
            "worst_pair": list(self.worst_pair) if self.worst_pair else None,
            "tol": self.tol,
            "reason": self.reason,
        }


def decay_grid(grid: CertificationGrid | None = None) -> CertificationGrid:
    """The certification grid without lookahead (nothing is transported backward)."""
    g = grid or CertificationGrid()
    return CertificationGrid(g.n_starts, g.start_max, g.offsets, 0.0, g.burn_in, g.sup_step)


def certify_error_decay(sys: LtvSystem, L: CoefficientFunction, grid: CertificationGrid | None = None,
                        tol: float = 1e-3, settings: IntegratorSettings | None = None) -> DecayCertificate:
    """Fit ``||Phi_e(t, t0)|| <= K e^{-mu (t - t0)}`` for ``A - L C``; negative results are verdicts."""
    if L.shape != (sys.n, sys.p):
        raise DimensionError(f"gain must be {sys.n}x{sys.p}, got {L.shape}")
    grid = decay_grid(grid)
    err = sys.with_injection(L)
    span = np.linspace(0.0, grid.end, 2001)
    sup_gain = float(np.linalg.norm(L.evaluate_many(span), 2, axis=(1, 2)).max())
    # burn-in from the plant, not the closed loop, whose bound grows with the gain
    burn = grid.burn_in if grid.burn_in is not None else 1.0 / max(sys.bound_a, 1e-12)
    samples, _, _, walks = _declared_pairs(err, err.n, grid, settings, 0, dense=True)
    mu = fit_rate(samples, burn)
    if not mu > 0:
        longest = samples.offsets == samples.offsets.max()
        j = int(np.flatnonzero(longest)[np.argmax(samples.values[longest])])
        worst = (float(samples.t0[j]), float(samples.t[j]))
        return DecayCertificate(np.inf, float(mu), np.inf, sup_gain, False, grid, tol, worst,
                                f"error dynamics do not decay (fitted rate {mu:.4g})")
    K = bound_constant(walks, mu)
    fine, _, _, _ = _declared_pairs(err, err.n, grid.refined(), settings, 0)
    res, worst = bound_residual(fine, K, mu)
    ok = res <= tol
    reason = "" if ok else f"bound exceeded by {res:.3g} > tol {tol:g} on the refined grid"
    return DecayCertificate(K, float(mu), res, sup_gain, ok, grid, tol, worst, reason)
