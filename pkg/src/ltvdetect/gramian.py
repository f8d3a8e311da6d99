"""Observability Gramians and uniform complete observability.

``M(t1, t0)`` is the integral of ``Phi^T(s, t0) C^T(s) C(s) Phi(s, t0)`` over
``[t0, t1]``. It is evaluated by composite Simpson quadrature on the
integrator's step grid, one Simpson panel set per smooth segment between
coefficient breakpoints.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import GridError
from .propagate import IntegratorSettings, linear_solution
from .system import CoefficientFunction, LtvSystem

DEFAULT_T_MAX = 50.0
DEFAULT_N_STARTS = 32
# keeps the default threshold positive when C vanishes identically
THRESHOLD_FLOOR = 1e-12


def default_threshold(sys: LtvSystem, sigma: float) -> float:
    """``1e-6 * sigma * bound_C^2``, floored at ``1e-12``."""
    return max(1e-6 * sigma * sys.bound_c ** 2, THRESHOLD_FLOOR)


def _simpson_nodes(t0: float, t1: float, h: float, breaks) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and Simpson weights on ``[t0, t1]``, an even panel count per smooth segment."""
    bp = np.asarray(breaks, dtype=float)
    marks = np.unique(np.concatenate([[t0, t1], bp[(bp > t0) & (bp < t1)]]))
    nodes, weights = [], []
    for a, b in zip(marks[:-1], marks[1:]):
        if b - a <= 0:
            raise GridError(f"degenerate quadrature segment [{a:.6g}, {b:.6g}]")
        m = max(2, int(np.ceil((b - a) / h - 1e-9)))
        m += m % 2
        x = np.linspace(a, b, m + 1)
        w = np.full(m + 1, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        w *= (b - a) / m / 3.0
        if nodes:
            weights[-1][-1] += w[0]
            x, w = x[1:], w[1:]
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def observability_gramian(sys: LtvSystem, t0: float, t1: float,
                          settings: IntegratorSettings | None = None) -> np.ndarray:
    """``M(t1, t0)``, symmetrised."""
    if not t1 > t0:
        raise ValueError(f"need t1 > t0, got t0={t0:g}, t1={t1:g}")
    settings = settings or IntegratorSettings()
    if settings.method == "adaptive":
        settings = IntegratorSettings(step=settings.step, cond_cap=settings.cond_cap)
    h = settings.step_for(sys.bound_a)
    nodes, w = _simpson_nodes(t0, t1, h, sys.breakpoints())
    # every quadrature node is an integrator node, so the RK4 step never exceeds h
    Phi = linear_solution(sys.A, np.eye(sys.n), nodes, settings)
    Y = sys.C.evaluate_many(nodes) @ Phi
    M = np.einsum("i,ipj,ipk->jk", w, Y, Y)
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class GramianReport:
    sigma: float
    starts: np.ndarray
    gramians: np.ndarray        # (len(starts), n, n)
    lambda_min: np.ndarray      # clipped at 0
    lambda_max: np.ndarray
    threshold: float
    asymmetry: float            # max |M - M^T| over the stored matrices

    @property
    def beta1(self) -> float:
        return float(self.lambda_min.min())

    @property
    def beta2(self) -> float:
        return float(self.lambda_max.max())

    @property
    def uco(self) -> bool:
        return self.beta1 >= self.threshold

    def to_dict(self):
        return {
            "sigma": self.sigma,
            "starts": self.starts.tolist(),
            "lambda_min": self.lambda_min.tolist(),
            "lambda_max": self.lambda_max.tolist(),
            "beta1": self.beta1,
            "beta2": self.beta2,
            "threshold": self.threshold,
            "uco": self.uco,
        }


def default_starts(sys: LtvSystem, sigma: float, t_max: float | None = None,
                   n_starts: int = DEFAULT_N_STARTS) -> np.ndarray:
    T = min(sys.horizon, DEFAULT_T_MAX) if t_max is None else t_max
    if T < sigma:
        raise ValueError(f"window {sigma:g} longer than horizon {T:g}")
    return np.linspace(0.0, T - sigma, n_starts)


def check_uco(sys: LtvSystem, sigma: float, starts: Sequence[float] | None = None,
              beta1_threshold: float | None = None,
              settings: IntegratorSettings | None = None) -> GramianReport:
    """Gramians over ``[t0, t0 + sigma]`` for every start and the resulting bounds."""
    if sigma <= 0:
        raise ValueError("window sigma must be positive")
    starts = default_starts(sys, sigma) if starts is None else np.asarray(starts, dtype=float)
    if starts.size == 0:
        raise ValueError("check_uco needs at least one start")
    if np.any(starts + sigma > sys.horizon + 1e-9):
        raise ValueError(f"window ending at {starts.max() + sigma:g} exceeds horizon {sys.horizon:g}")
    thr = default_threshold(sys, sigma) if beta1_threshold is None else float(beta1_threshold)
    Ms = np.array([observability_gramian(sys, s, s + sigma, settings) for s in starts])
    eig = np.linalg.eigvalsh(Ms)
    asym = float(np.abs(Ms - np.swapaxes(Ms, 1, 2)).max())
    return GramianReport(float(sigma), starts, Ms, np.maximum(eig[:, 0], 0.0), eig[:, -1], thr, asym)


def smallest_uco_window(sys: LtvSystem, sigmas: Sequence[float], starts=None,
                        beta1_threshold: float | None = None, settings=None):
    """Reports for every window in increasing order and the smallest passing one (or ``None``)."""
    reports = []
    for s in sorted(float(x) for x in sigmas):
        st = None if starts is None else np.asarray(starts, dtype=float)
        reports.append(check_uco(sys, s, st, beta1_threshold, settings))
    best = next((r.sigma for r in reports if r.uco), None)
    return best, reports


def check_injection_invariance(sys: LtvSystem, L: CoefficientFunction, sigma: float,
                               starts: Sequence[float] | None = None,
                               beta1_threshold: float | None = None, settings=None):
    """UCO reports for ``(A, C)`` and ``(A - L C, C)``; both use the threshold of the open loop."""
    if L.shape != (sys.n, sys.p):
        raise ValueError(f"gain must be {sys.n}x{sys.p}, got {L.shape}")
    if starts is None:
        starts = default_starts(sys, sigma)
    thr = default_threshold(sys, sigma) if beta1_threshold is None else beta1_threshold
    open_loop = check_uco(sys, sigma, starts, thr, settings)
    closed = check_uco(sys.with_injection(L), sigma, starts, thr, settings)
    return open_loop, closed
