"""Matrix ODE integration and state-transition matrices.

The default integrator is fixed-step classical RK4 with steps aligned to the
coefficient breakpoints. For the linear equation ``X' = A(t) X`` each RK4 step
is itself a matrix ``M_j`` with ``X_{j+1} = M_j X_j``; the step matrices are
built in one vectorised pass and then chained.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import _kernels
from .errors import ConditioningError, DimensionError, IntegrationOverflowError, StiffnessError
from .system import CoefficientFunction, LtvSystem

# stage evaluations are pulled this fraction of a step inside the step, so that
# piecewise-constant coefficients are sampled from the correct piece
_NUDGE = 1e-9


def default_step(bound: float) -> float:
    """``1e-3`` characteristic times, clipped to ``[1e-5, 1e-1]``."""
    if bound <= 0:
        return 1e-1
    return float(np.clip(1e-3 / bound, 1e-5, 1e-1))


@dataclass(frozen=True)
class IntegratorSettings:
    method: str = "rk4"
    step: float | None = None
    rtol: float = 1e-10
    atol: float = 1e-12
    cond_cap: float = 1e8

    def __post_init__(self):
        if self.method not in ("rk4", "adaptive"):
            raise ValueError(f"unknown integrator method {self.method!r}")
        if self.step is not None and self.step <= 0:
            raise ValueError("step must be positive")
        if self.rtol <= 0 or self.atol <= 0 or self.cond_cap <= 1:
            raise ValueError("tolerances must be positive and cond_cap > 1")

    def step_for(self, bound: float) -> float:
        return self.step if self.step is not None else default_step(bound)


def _settings(settings):
    return settings if settings is not None else IntegratorSettings()


def step_nodes(t0: float, t1: float, h: float, breakpoints: Sequence[float] = ()) -> np.ndarray:
    """RK4 nodes from ``t0`` to ``t1`` (either direction) with breakpoints as nodes."""
    lo, hi = min(t0, t1), max(t0, t1)
    if hi == lo:
        return np.array([t0], dtype=float)
    bp = np.asarray(breakpoints, dtype=float)
    marks = np.unique(np.concatenate([[lo, hi], bp[(bp > lo) & (bp < hi)]]))
    nodes = _subdivide(marks, h)
    return nodes if t1 > t0 else nodes[::-1].copy()


def _subdivide(marks: np.ndarray, h: float) -> np.ndarray:
    """Split each interval of sorted ``marks`` into equal steps of at most ``h``."""
    length = np.diff(marks)
    m = np.maximum(1, np.ceil(length / h - 1e-9)).astype(np.int64)
    seg = np.repeat(np.arange(length.size), m)
    j = np.arange(seg.size) - np.repeat(np.cumsum(m) - m, m)
    return np.concatenate([marks[seg] + j * (length / m)[seg], marks[-1:]])


def stage_times(nodes: np.ndarray):
    """Times of the three distinct RK4 stages for each step between ``nodes``."""
    h = np.diff(nodes)
    return nodes[:-1] + _NUDGE * h, nodes[:-1] + 0.5 * h, nodes[1:] - _NUDGE * h


def rk4_step_matrices(A: CoefficientFunction, nodes: np.ndarray) -> np.ndarray:
    """Propagators ``M_j`` of one RK4 step of ``X' = A X`` between consecutive nodes."""
    n = A.rows
    h = np.diff(nodes)
    if h.size == 0:
        return np.empty((0, n, n))
    t1, tm, t4 = stage_times(nodes)
    A1, A2, A4 = A.evaluate_many(t1), A.evaluate_many(tm), A.evaluate_many(t4)
    eye = np.eye(n)
    hh = h[:, None, None]
    K1 = A1
    K2 = A2 @ (eye + 0.5 * hh * K1)
    K3 = A2 @ (eye + 0.5 * hh * K2)
    K4 = A4 @ (eye + hh * K3)
    return eye + hh / 6.0 * (K1 + 2.0 * K2 + 2.0 * K3 + K4)


def _adaptive_linear(A: CoefficientFunction, X0, times, settings):
    """Solution of ``X' = A X`` at monotone ``times``, restarting at breakpoints."""
    n, c = X0.shape
    bp = A.breakpoints()
    out = [np.array(X0, dtype=float)]
    X = np.array(X0, dtype=float)
    for a, b in zip(times[:-1], times[1:]):
        lo, hi = min(a, b), max(a, b)
        inner = bp[(bp > lo) & (bp < hi)]
        marks = np.concatenate([[a], np.sort(inner) if b > a else np.sort(inner)[::-1], [b]])
        for s0, s1 in zip(marks[:-1], marks[1:]):
            mid = 0.5 * (s0 + s1)
            # evaluate strictly inside the segment so jumps do not leak across
            def rhs(t, y, s0=s0, s1=s1):
                tt = min(max(t, min(s0, s1)), max(s0, s1))
                tt = tt + _NUDGE * (mid - tt)
                return (A.evaluate(tt) @ y.reshape(n, c)).ravel()

            sol = solve_ivp(rhs, (s0, s1), X.ravel(), method="DOP853",
                            rtol=settings.rtol, atol=settings.atol)
            if sol.status < 0:
                if "step size" in sol.message:
                    raise StiffnessError(f"adaptive step underflow near t={sol.t[-1]:.6g}: {sol.message}")
                raise IntegrationOverflowError(float(sol.t[-1]))
            X = sol.y[:, -1].reshape(n, c)
            if not np.all(np.isfinite(X)):
                raise IntegrationOverflowError(float(s1))
        out.append(X.copy())
    return np.array(out)


def linear_solution(A: CoefficientFunction, X0, times, settings=None) -> np.ndarray:
    """``X(times[i])`` for ``X' = A(t) X``, ``X(times[0]) = X0``; ``times`` monotone."""
    settings = _settings(settings)
    times = np.asarray(times, dtype=float)
    X0 = np.asarray(X0, dtype=float)
    if X0.ndim != 2 or X0.shape[0] != A.rows:
        raise DimensionError(f"X0 shape {X0.shape} incompatible with A {A.shape}")
    if times.size == 1:
        return X0[None].copy()
    d = np.diff(times)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("times must be strictly monotone")
    if settings.method == "adaptive":
        return _adaptive_linear(A, X0, times, settings)
    h = settings.step_for(A.bound())
    marks = np.concatenate([times, A.breakpoints()])
    nodes = step_nodes(times[0], times[-1], h, marks)
    M = rk4_step_matrices(A, nodes)
    record = np.searchsorted(nodes, times) if times[-1] > times[0] else \
        np.searchsorted(-nodes, -times)
    out, bad = _kernels.chain(M, np.ascontiguousarray(X0), record.astype(np.int64))
    if bad >= 0:
        raise IntegrationOverflowError(float(nodes[bad + 1]))
    return out


def propagate_linear(A: CoefficientFunction, X0, t0: float, t1: float, settings=None) -> np.ndarray:
    return linear_solution(A, X0, [t0, t1], settings)[-1]


def integrate_matrix_ode(rhs: Callable, X0, t0: float, t1: float, settings=None,
                         breakpoints: Sequence[float] = ()) -> np.ndarray:
    """Solve ``X' = rhs(t, X)`` from ``t0`` to ``t1`` (``t1 < t0`` integrates backward).

    With ``method='rk4'`` the fixed step is ``settings.step`` (``1e-3`` if unset),
    shortened so that every breakpoint is a node.
    """
    settings = _settings(settings)
    X = np.array(X0, dtype=float)
    if t0 == t1:
        return X
    if settings.method == "adaptive":
        shape = X.shape
        sol = solve_ivp(lambda t, y: np.asarray(rhs(t, y.reshape(shape)), dtype=float).ravel(),
                        (t0, t1), X.ravel(), method="DOP853", rtol=settings.rtol, atol=settings.atol)
        if sol.status < 0:
            if "step size" in sol.message:
                raise StiffnessError(f"adaptive step underflow near t={sol.t[-1]:.6g}: {sol.message}")
            raise IntegrationOverflowError(float(sol.t[-1]))
        X = sol.y[:, -1].reshape(shape)
        if not np.all(np.isfinite(X)):
            raise IntegrationOverflowError(float(t1))
        return X
    h = settings.step if settings.step is not None else 1e-3
    nodes = step_nodes(t0, t1, h, breakpoints)
    t1s, tms, t4s = stage_times(nodes)
    for j, hj in enumerate(np.diff(nodes)):
        k1 = rhs(t1s[j], X)
        k2 = rhs(tms[j], X + 0.5 * hj * k1)
        k3 = rhs(tms[j], X + 0.5 * hj * k2)
        k4 = rhs(t4s[j], X + hj * k3)
        X = X + hj / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(X)):
            raise IntegrationOverflowError(float(nodes[j + 1]))
    return X


class TransitionCache:
    """Short-interval transition factors ``Phi(t_{i+1}, t_i)`` over an ordered grid.

    The supplied grid is refined so that no factor spans more than
    ``max_interval`` (default ``min(1, 2 / bound_A)``), which keeps every factor
    well conditioned; longer transitions are assembled as products.
    """

    def __init__(self, A, grid, settings=None, max_interval=None):
        if isinstance(A, LtvSystem):
            A = A.A
        self.A = A
        self.settings = _settings(settings)
        grid = np.unique(np.asarray(grid, dtype=float))
        if grid.size < 2:
            raise ValueError("transition cache needs at least two grid times")
        bound = A.bound()
        if max_interval is None:
            max_interval = min(1.0, 2.0 / bound) if bound > 0 else 1.0
        self.times = _subdivide(grid, max_interval)
        n = A.rows
        if self.settings.method == "adaptive":
            factors = np.empty((self.times.size - 1, n, n))
            for i, (a, b) in enumerate(zip(self.times[:-1], self.times[1:])):
                factors[i] = propagate_linear(A, np.eye(n), a, b, self.settings)
        else:
            h = self.settings.step_for(bound)
            nodes = step_nodes(self.times[0], self.times[-1], h,
                               np.concatenate([self.times, A.breakpoints()]))
            M = rk4_step_matrices(A, nodes)
            ends = np.searchsorted(nodes, self.times[1:])
            factors = _kernels.segment_products(M, ends.astype(np.int64))
        if not np.all(np.isfinite(factors)):
            raise IntegrationOverflowError(float(self.times[np.argmax(~np.isfinite(factors).all(axis=(1, 2))) + 1]))
        cond = np.linalg.cond(factors)
        if np.any(cond > self.settings.cond_cap):
            i = int(np.argmax(cond))
            raise ConditioningError(
                f"transition factor on [{self.times[i]:.6g}, {self.times[i + 1]:.6g}] has "
                f"condition number {cond[i]:.3g} > cap {self.settings.cond_cap:.3g}; "
                "use a finer grid or the QR flow"
            )
        self.factors = factors
        self.inverse_factors = np.linalg.inv(factors)
        self.n = n

    @property
    def span(self):
        return float(self.times[0]), float(self.times[-1])

    def _index(self, t):
        i = int(np.searchsorted(self.times, t, side="right") - 1)
        return min(max(i, 0), self.times.size - 1)

    def _grid_hit(self, t):
        i = self._index(t)
        tol = 1e-12 * max(1.0, abs(t))
        if abs(self.times[i] - t) <= tol:
            return i
        if i + 1 < self.times.size and abs(self.times[i + 1] - t) <= tol:
            return i + 1
        return None

    def between(self, a: int, b: int) -> np.ndarray:
        """``Phi(times[a], times[b])`` from stored factors."""
        X = np.eye(self.n)
        if a >= b:
            for i in range(b, a):
                X = self.factors[i] @ X
        else:
            for i in range(a, b):
                X = X @ self.inverse_factors[i]
        return X

    def _short(self, t, s):
        if t == s:
            return np.eye(self.n)
        return propagate_linear(self.A, np.eye(self.n), s, t, self.settings)

    def transition(self, t: float, t0: float) -> np.ndarray:
        lo, hi = self.span
        slack = 1e-9 * max(1.0, abs(hi))
        for v in (t, t0):
            if v < lo - slack or v > hi + slack:
                raise ValueError(f"t={v:.6g} outside cache span [{lo:.6g}, {hi:.6g}]")
        if t == t0:
            return np.eye(self.n)
        a = self._grid_hit(t)
        b = self._grid_hit(t0)
        if a is not None and b is not None:
            return self.between(a, b)
        ia = a if a is not None else self._index(t)
        ib = b if b is not None else self._index(t0)
        return self._short(t, self.times[ia]) @ self.between(ia, ib) @ self._short(self.times[ib], t0)


def transition(cache: TransitionCache, t: float, t0: float) -> np.ndarray:
    return cache.transition(t, t0)
