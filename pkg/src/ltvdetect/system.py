"""Time-varying coefficient matrices and assembled LTV systems.

Four concrete kinds of coefficient function are supported:

* ``constant``   -- ``F(t) = F0``
* ``periodic``   -- ``F(t) = F0 + sum_m a_m * sin/cos(w_m t + phi_m) E_{i_m j_m}``
* ``piecewise``  -- piecewise-constant schedule, right-continuous at breakpoints
* ``sampled``    -- values on a time grid, linear interpolation in between

plus an internal ``composite`` kind produced by block extraction, products and
closed-loop assembly. All of them are immutable and evaluate vectorised through
:meth:`CoefficientFunction.evaluate_many`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, DomainError

_DOMAIN_SLACK = 1e-9


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _as_matrix(value, name="value") -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


class CoefficientFunction:
    """Bounded matrix-valued function of time on ``[t_min, t_max]``."""

    kind = "abstract"
    rows: int
    cols: int
    t_min: float = 0.0
    t_max: float = np.inf

    @property
    def shape(self):
        return (self.rows, self.cols)

    # evaluation -----------------------------------------------------------
    def _check_domain(self, ts: np.ndarray):
        slack = _DOMAIN_SLACK * max(1.0, abs(self.t_max) if np.isfinite(self.t_max) else 1.0)
        if ts.size and (ts.min() < self.t_min - slack or ts.max() > self.t_max + slack):
            bad = ts[(ts < self.t_min - slack) | (ts > self.t_max + slack)][0]
            raise DomainError(
                f"t={bad:.6g} outside domain [{self.t_min:.6g}, {self.t_max:.6g}] "
                f"of {self.kind} coefficient"
            )

    def evaluate_many(self, ts) -> np.ndarray:
        """Return an array of shape ``(len(ts), rows, cols)``."""
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        self._check_domain(ts)
        return self._eval(ts)

    def evaluate(self, t: float) -> np.ndarray:
        return self.evaluate_many([t])[0]

    __call__ = evaluate

    def _eval(self, ts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # metadata -------------------------------------------------------------
    def bound(self) -> float:
        """Uniform upper bound on the spectral norm over the domain."""
        raise NotImplementedError

    def breakpoints(self) -> np.ndarray:
        """Interior times where the function (or its derivative) jumps."""
        return np.empty(0)

    def zero_mask(self) -> np.ndarray:
        """Entries that vanish identically on the whole domain."""
        return np.zeros(self.shape, dtype=bool)

    def block(self, rows: slice, cols: slice) -> "CoefficientFunction":
        r = range(self.rows)[rows]
        c = range(self.cols)[cols]
        return Composite(
            len(r), len(c),
            lambda ts, _f=self, _r=rows, _c=cols: _f._eval(ts)[:, _r, _c],
            t_min=self.t_min, t_max=self.t_max,
            bound_value=self.bound(),
            breaks=self.breakpoints(),
            zeros=self.zero_mask()[rows, cols],
        )


@dataclass(frozen=True, eq=False)
class Constant(CoefficientFunction):
    value: np.ndarray
    t_max: float = np.inf
    t_min: float = 0.0
    kind = "constant"

    def __post_init__(self):
        object.__setattr__(self, "value", _frozen(_as_matrix(self.value)))

    @property
    def rows(self):
        return self.value.shape[0]

    @property
    def cols(self):
        return self.value.shape[1]

    def _eval(self, ts):
        return np.broadcast_to(self.value, (ts.size,) + self.value.shape).copy()

    def bound(self):
        return float(np.linalg.norm(self.value, 2)) if self.value.size else 0.0

    def zero_mask(self):
        return self.value == 0.0

    def block(self, rows, cols):
        return Constant(self.value[rows, cols], t_max=self.t_max, t_min=self.t_min)


@dataclass(frozen=True)
class TrigTerm:
    row: int
    col: int
    amplitude: float
    frequency: float
    phase: float = 0.0
    func: str = "sin"

    def __post_init__(self):
        if self.func not in ("sin", "cos"):
            raise DomainError(f"trig term func must be 'sin' or 'cos', got {self.func!r}")


@dataclass(frozen=True, eq=False)
class Periodic(CoefficientFunction):
    """Constant offset plus a finite sum of per-entry sinusoids."""

    offset: np.ndarray
    terms: tuple = ()
    t_max: float = np.inf
    t_min: float = 0.0
    kind = "periodic"

    def __post_init__(self):
        object.__setattr__(self, "offset", _frozen(_as_matrix(self.offset, "offset")))
        terms = tuple(t if isinstance(t, TrigTerm) else TrigTerm(**t) for t in self.terms)
        for term in terms:
            if not (0 <= term.row < self.rows and 0 <= term.col < self.cols):
                raise DimensionError(
                    f"trig term at ({term.row}, {term.col}) outside {self.rows}x{self.cols} matrix"
                )
        object.__setattr__(self, "terms", terms)

    @property
    def rows(self):
        return self.offset.shape[0]

    @property
    def cols(self):
        return self.offset.shape[1]

    def _eval(self, ts):
        out = np.broadcast_to(self.offset, (ts.size,) + self.offset.shape).copy()
        for term in self.terms:
            f = np.sin if term.func == "sin" else np.cos
            out[:, term.row, term.col] += term.amplitude * f(term.frequency * ts + term.phase)
        return out

    def _entry_envelope(self):
        env = np.abs(self.offset).copy()
        for term in self.terms:
            env[term.row, term.col] += abs(term.amplitude)
        return env

    def bound(self):
        # |F(t)| <= env entrywise and the 2-norm is monotone on nonnegative matrices
        env = self._entry_envelope()
        return float(np.linalg.norm(env, 2)) if env.size else 0.0

    def zero_mask(self):
        return self._entry_envelope() == 0.0

    def block(self, rows, cols):
        r = list(range(self.rows)[rows])
        c = list(range(self.cols)[cols])
        terms = tuple(
            TrigTerm(r.index(t.row), c.index(t.col), t.amplitude, t.frequency, t.phase, t.func)
            for t in self.terms if t.row in r and t.col in c
        )
        return Periodic(self.offset[rows, cols], terms, t_max=self.t_max, t_min=self.t_min)


@dataclass(frozen=True, eq=False)
class PiecewiseConstant(CoefficientFunction):
    """``values[i]`` holds on ``[starts[i], starts[i+1])``; the last piece runs to ``t_max``."""

    starts: np.ndarray
    values: np.ndarray
    t_max: float = np.inf
    kind = "piecewise"

    def __post_init__(self):
        starts = np.asarray(self.starts, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None, None]
        if starts.ndim != 1 or values.ndim != 3 or values.shape[0] != starts.size:
            raise DimensionError("piecewise: need one matrix per breakpoint")
        if starts.size == 0 or np.any(np.diff(starts) <= 0):
            raise DomainError("piecewise: breakpoints must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise DomainError("piecewise: non-finite values")
        object.__setattr__(self, "starts", _frozen(starts))
        object.__setattr__(self, "values", _frozen(values))

    @property
    def t_min(self):
        return float(self.starts[0])

    @property
    def rows(self):
        return self.values.shape[1]

    @property
    def cols(self):
        return self.values.shape[2]

    def _eval(self, ts):
        idx = np.clip(np.searchsorted(self.starts, ts, side="right") - 1, 0, self.starts.size - 1)
        return self.values[idx].copy()

    def bound(self):
        return float(max(np.linalg.norm(v, 2) for v in self.values))

    def breakpoints(self):
        return self.starts[1:].copy()

    def zero_mask(self):
        return np.all(self.values == 0.0, axis=0)

    def block(self, rows, cols):
        return PiecewiseConstant(self.starts, self.values[:, rows, cols], t_max=self.t_max)


@dataclass(frozen=True, eq=False)
class Sampled(CoefficientFunction):
    """Values on a time grid, linearly interpolated."""

    times: np.ndarray
    values: np.ndarray
    kind = "sampled"

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None, None]
        if times.ndim != 1 or values.ndim != 3 or values.shape[0] != times.size:
            raise DimensionError("sampled: need one matrix per grid time")
        if times.size < 2 or np.any(np.diff(times) <= 0):
            raise DomainError("sampled: grid must have >= 2 strictly increasing times")
        if not np.all(np.isfinite(values)):
            raise DomainError("sampled: non-finite values")
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "values", _frozen(values))

    @property
    def t_min(self):
        return float(self.times[0])

    @property
    def t_max(self):
        return float(self.times[-1])

    @property
    def rows(self):
        return self.values.shape[1]

    @property
    def cols(self):
        return self.values.shape[2]

    def _eval(self, ts):
        ts = np.clip(ts, self.times[0], self.times[-1])
        i = np.clip(np.searchsorted(self.times, ts, side="right") - 1, 0, self.times.size - 2)
        w = ((ts - self.times[i]) / (self.times[i + 1] - self.times[i]))[:, None, None]
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]

    def bound(self):
        # a convex combination never exceeds the larger endpoint norm
        return float(np.linalg.norm(self.values, 2, axis=(1, 2)).max())

    def grid(self):
        return self.times.copy()

    def zero_mask(self):
        return np.all(self.values == 0.0, axis=0)

    def block(self, rows, cols):
        return Sampled(self.times, self.values[:, rows, cols])


@dataclass(frozen=True, eq=False)
class Composite(CoefficientFunction):
    """Coefficient defined by a vectorised callable ``fn(ts) -> (m, rows, cols)``."""

    rows: int
    cols: int
    fn: Callable
    t_min: float = 0.0
    t_max: float = np.inf
    bound_value: float | None = None
    breaks: np.ndarray = field(default_factory=lambda: np.empty(0))
    zeros: np.ndarray | None = None
    kind = "composite"

    def _eval(self, ts):
        out = np.asarray(self.fn(ts), dtype=float)
        if out.shape != (ts.size, self.rows, self.cols):
            raise DimensionError(
                f"composite coefficient returned {out.shape}, expected {(ts.size, self.rows, self.cols)}"
            )
        return out

    def bound(self):
        if self.bound_value is not None:
            return float(self.bound_value)
        hi = self.t_max if np.isfinite(self.t_max) else self.t_min + 100.0
        ts = np.linspace(self.t_min, hi, 4001)
        vals = self._eval(ts)
        b = float(np.linalg.norm(vals, 2, axis=(1, 2)).max()) if vals.size else 0.0
        object.__setattr__(self, "bound_value", b)
        return b

    def breakpoints(self):
        return np.asarray(self.breaks, dtype=float)

    def zero_mask(self):
        if self.zeros is None:
            return np.zeros(self.shape, dtype=bool)
        return np.asarray(self.zeros, dtype=bool)


# ---------------------------------------------------------------------------
# combinators

def _merge_breaks(*fs):
    parts = [f.breakpoints() for f in fs]
    return np.unique(np.concatenate(parts)) if parts else np.empty(0)


def _common_domain(*fs):
    return max(f.t_min for f in fs), min(f.t_max for f in fs)


def product(F: CoefficientFunction, G: CoefficientFunction) -> Composite:
    """``t -> F(t) @ G(t)``."""
    if F.cols != G.rows:
        raise DimensionError(f"cannot multiply {F.shape} by {G.shape}")
    lo, hi = _common_domain(F, G)
    return Composite(
        F.rows, G.cols, lambda ts: F._eval(ts) @ G._eval(ts),
        t_min=lo, t_max=hi, bound_value=F.bound() * G.bound(), breaks=_merge_breaks(F, G),
    )


def closed_loop(A: CoefficientFunction, L: CoefficientFunction, C: CoefficientFunction) -> Composite:
    """Output-injection dynamics ``t -> A(t) - L(t) C(t)``."""
    if L.shape != (A.rows, C.rows) or A.shape != (A.rows, C.cols):
        raise DimensionError(f"injection shapes A{A.shape}, L{L.shape}, C{C.shape} inconsistent")
    lo, hi = _common_domain(A, L, C)
    return Composite(
        A.rows, A.cols, lambda ts: A._eval(ts) - L._eval(ts) @ C._eval(ts),
        t_min=lo, t_max=hi, bound_value=A.bound() + L.bound() * C.bound(),
        breaks=_merge_breaks(A, L, C),
    )


def evaluate(f: CoefficientFunction, t: float) -> np.ndarray:
    return f.evaluate(t)


# ---------------------------------------------------------------------------
# systems

@dataclass(frozen=True)
class BlockPartition:
    """Split of ``n`` states into a leading ``n-k`` block and a trailing ``k`` block."""

    n: int
    k: int

    def __post_init__(self):
        if self.n < 1 or not 0 <= self.k <= self.n:
            raise DimensionError(f"invalid partition n={self.n}, k={self.k}")

    @property
    def lead(self) -> slice:
        return slice(0, self.n - self.k)

    @property
    def trail(self) -> slice:
        return slice(self.n - self.k, self.n)

    @property
    def projector(self) -> np.ndarray:
        P = np.zeros((self.n, self.n))
        P[self.trail, self.trail] = np.eye(self.k)
        return P


@dataclass(frozen=True)
class LtvSystem:
    """The pair ``(A(t), C(t))`` of ``x' = A x``, ``y = C x``."""

    A: CoefficientFunction
    C: CoefficientFunction
    bound_a: float = -1.0
    bound_c: float = -1.0
    name: str = ""

    def __post_init__(self):
        if self.A.rows != self.A.cols:
            raise DimensionError(f"A must be square, got {self.A.shape}")
        if self.C.cols != self.A.rows:
            raise DimensionError(f"C has {self.C.cols} columns, expected n={self.A.rows}")
        if self.bound_a < 0:
            object.__setattr__(self, "bound_a", self.A.bound())
        if self.bound_c < 0:
            object.__setattr__(self, "bound_c", self.C.bound())

    @property
    def n(self):
        return self.A.rows

    @property
    def p(self):
        return self.C.rows

    @property
    def horizon(self):
        return min(self.A.t_max, self.C.t_max)

    def breakpoints(self):
        return _merge_breaks(self.A, self.C)

    def with_injection(self, L: CoefficientFunction) -> "LtvSystem":
        return LtvSystem(closed_loop(self.A, L, self.C), self.C, name=self.name)

    def is_block_triangular(self, part: BlockPartition) -> bool:
        return bool(np.all(self.A.zero_mask()[part.trail, part.lead]))

    def is_upper_triangular(self) -> bool:
        return bool(np.all(self.A.zero_mask()[np.tril_indices(self.n, -1)]))

    def is_block_diagonal(self, part: BlockPartition) -> bool:
        mask = self.A.zero_mask()
        return bool(np.all(mask[part.trail, part.lead]) and np.all(mask[part.lead, part.trail]))


def _block_bound(blocks: Sequence[Sequence[float]]) -> float:
    return float(np.linalg.norm(np.asarray(blocks, dtype=float), 2))


def assemble_block_triangular(B11, B12, B22, C1, C2, part: BlockPartition, name="") -> LtvSystem:
    """System with ``A = [[B11, B12], [0, B22]]`` and ``C = [C1, C2]``."""
    m, k = part.n - part.k, part.k
    expect = {"B11": (B11, (m, m)), "B12": (B12, (m, k)), "B22": (B22, (k, k)), "C2": (C2, (C1.rows, k))}
    for label, (f, shape) in expect.items():
        if f.shape != shape:
            raise DimensionError(f"{label} has shape {f.shape}, expected {shape}")
    if C1.cols != m:
        raise DimensionError(f"C1 has shape {C1.shape}, expected (p, {m})")
    lo, hi = _common_domain(B11, B12, B22, C1, C2)

    def a_fn(ts):
        out = np.zeros((ts.size, part.n, part.n))
        out[:, :m, :m] = B11._eval(ts)
        out[:, :m, m:] = B12._eval(ts)
        out[:, m:, m:] = B22._eval(ts)
        return out

    def c_fn(ts):
        return np.concatenate([C1._eval(ts), C2._eval(ts)], axis=2)

    zeros_a = np.zeros((part.n, part.n), dtype=bool)
    zeros_a[:m, :m] = B11.zero_mask()
    zeros_a[:m, m:] = B12.zero_mask()
    zeros_a[m:, m:] = B22.zero_mask()
    zeros_a[m:, :m] = True
    A = Composite(
        part.n, part.n, a_fn, t_min=lo, t_max=hi,
        bound_value=_block_bound([[B11.bound(), B12.bound()], [0.0, B22.bound()]]),
        breaks=_merge_breaks(B11, B12, B22), zeros=zeros_a,
    )
    C = Composite(
        C1.rows, part.n, c_fn, t_min=lo, t_max=hi,
        bound_value=_block_bound([[C1.bound(), C2.bound()]]),
        breaks=_merge_breaks(C1, C2), zeros=np.hstack([C1.zero_mask(), C2.zero_mask()]),
    )
    return LtvSystem(A, C, name=name)


def constant_system(A, C, name="") -> LtvSystem:
    return LtvSystem(Constant(A), Constant(C), name=name)
