"""End-to-end detectability analysis.

The pipeline brings the system to upper triangular form (if needed), locates
the dichotomy from the growth rates of the diagonal, certifies it, and then
decides detectability from the observability of the leading anti-stable block
``(B11, C1)``. Under a positive answer an observer gain is built from the
filter Riccati equation and the decay of the error dynamics is certified as a
self-check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dichotomy import CertificationGrid, DichotomyCertificate, certify_dichotomy, default_gap, estimate_exponents
from .errors import FormError, LtvError, NoGapError
from .gramian import GramianReport, check_uco
from .observer import (DecayCertificate, RiccatiSolution, certify_error_decay, solve_filter_riccati,
                       synthesize_gain)
from .propagate import IntegratorSettings
from .qrflow import run_qr_flow, triangularized_system
from .reduce import triangular_reduction
from .system import BlockPartition, LtvSystem

DETECTABLE = "detectable"
NOT_DETECTABLE = "not-detectable"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class AnalysisOptions:
    k: int | None = None                    # pins the stable dimension
    route: str = "triangular"               # or "diagonal"
    horizon: float = 50.0
    window: float = 10.0                    # exponent averaging window
    gap: float | None = None                # default 0.05 * bound_A
    exponent_starts: int = 200
    grid: CertificationGrid = field(default_factory=CertificationGrid)
    tol: float = 1e-3
    sigmas: tuple = (1.0, 2.0, 4.0)
    gramian_starts: int = 32
    beta1_threshold: float | None = None
    Q_w: np.ndarray | None = None
    R_v: np.ndarray | None = None
    P0: np.ndarray | None = None
    reduction_horizon: float = 20.0
    settings: IntegratorSettings = field(default_factory=IntegratorSettings)
    seed: int = 0

    def __post_init__(self):
        if self.route not in ("triangular", "diagonal"):
            raise ValueError(f"unknown route {self.route!r}")
        if self.horizon <= 0 or self.window <= 0 or self.tol <= 0 or self.reduction_horizon <= 0:
            raise ValueError("horizons, window and tolerance must be positive")
        if not self.sigmas or min(self.sigmas) <= 0:
            raise ValueError("need at least one positive window length")

    def to_dict(self):
        return {
            "k": self.k, "route": self.route, "horizon": self.horizon, "window": self.window,
            "gap": self.gap, "grid": self.grid.to_dict(), "tol": self.tol,
            "sigmas": list(self.sigmas), "gramian_starts": self.gramian_starts,
            "beta1_threshold": self.beta1_threshold, "reduction_horizon": self.reduction_horizon,
            "integrator": {"method": self.settings.method, "step": self.settings.step,
                           "rtol": self.settings.rtol, "atol": self.settings.atol},
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class DetectabilityReport:
    system: str
    n: int
    p: int
    verdict: str
    stage: str | None                       # failing stage when inconclusive
    k: int | None = None
    triangularized: bool = False
    exponents: dict | None = None
    dichotomy: DichotomyCertificate | None = None
    uco: GramianReport | None = None
    uco_reports: tuple = ()
    riccati: RiccatiSolution | None = None
    decay: DecayCertificate | None = None
    transformed_output: dict | None = None
    diagnostics: tuple = ()
    options: AnalysisOptions | None = None
    error_system: LtvSystem | None = None   # A - L C of the analysed form, for re-checks

    @property
    def uco_verdict(self) -> bool | None:
        if self.k is not None and self.k == self.n:
            return True
        return None if self.uco is None else self.uco.uco

    def to_dict(self):
        return {
            "system": {"name": self.system, "n": self.n, "p": self.p},
            "verdict": self.verdict,
            "stage": self.stage,
            "k": self.k,
            "triangularized": self.triangularized,
            "exponents": self.exponents,
            "dichotomy": None if self.dichotomy is None else self.dichotomy.to_dict(),
            "uco": None if self.uco is None else self.uco.to_dict(),
            "uco_verdict": self.uco_verdict,
            "uco_windows": [{"sigma": r.sigma, "beta1": r.beta1, "beta2": r.beta2, "uco": r.uco}
                            for r in self.uco_reports],
            "riccati": None if self.riccati is None else self.riccati.to_dict(),
            "decay": None if self.decay is None else self.decay.to_dict(),
            "transformed_output": self.transformed_output,
            "diagnostics": list(self.diagnostics),
            "options": None if self.options is None else self.options.to_dict(),
        }


class _Builder:
    """Accumulates report fields while the stages run."""

    def __init__(self, sys: LtvSystem, options: AnalysisOptions):
        self.fields = {"system": sys.name, "n": sys.n, "p": sys.p, "options": options}
        self.notes = []

    def done(self, verdict, stage=None):
        return DetectabilityReport(verdict=verdict, stage=stage, diagnostics=tuple(self.notes), **self.fields)

    def fail(self, stage, exc):
        self.notes.append(f"{stage}: {type(exc).__name__}: {exc}")
        return self.done(INCONCLUSIVE, stage)


def _observe_and_decide(b: _Builder, tri: LtvSystem, part: BlockPartition, options: AnalysisOptions):
    """UCO of the leading block, then gain synthesis and decay certification."""
    n, m = part.n, part.n - part.k
    horizon = min(tri.horizon, options.horizon)
    ric = None
    if m:
        B11 = tri.A.block(part.lead, part.lead)
        C1 = tri.C.block(slice(None), part.lead)
        sub = LtvSystem(B11, C1, name="leading block")
        reports = []
        try:
            # windows in increasing order; the smallest passing one decides
            for s in sorted(options.sigmas):
                starts = np.linspace(0.0, horizon - s, options.gramian_starts)
                reports.append(check_uco(sub, s, starts, options.beta1_threshold, options.settings))
                if reports[-1].uco:
                    break
        except (LtvError, ValueError) as exc:
            return b.fail("uco", exc)
        chosen = next((r for r in reports if r.uco), reports[-1])
        b.fields.update(uco=chosen, uco_reports=tuple(reports))
        if not chosen.uco:
            b.notes.append(f"leading block not uniformly completely observable "
                           f"(beta1={chosen.beta1:.3g} < {chosen.threshold:.3g} for every window)")
            return b.done(NOT_DETECTABLE)
        try:
            ric = solve_filter_riccati(B11, C1, options.Q_w, options.R_v, options.P0, horizon,
                                       options.settings)
        except (LtvError, ValueError) as exc:
            return b.fail("riccati", exc)
        b.fields["riccati"] = ric
    else:
        b.notes.append("no anti-stable block: the system is uniformly exponentially stable, L = 0")
    L = synthesize_gain(tri, ric)
    b.fields["error_system"] = tri.with_injection(L)
    try:
        decay = certify_error_decay(tri, L, options.grid, options.tol, options.settings)
    except (LtvError, ValueError) as exc:
        return b.fail("decay", exc)
    b.fields["decay"] = decay
    if not decay.valid:
        b.notes.append(f"decay certification failed under UCO: {decay.reason}")
        return b.done(INCONCLUSIVE, "decay")
    return b.done(DETECTABLE)


def _diagonal_route(b: _Builder, tri: LtvSystem, part: BlockPartition, cert, options):
    """Reduce the triangular form to block-diagonal form and record ``C S``."""
    lead, trail = part.lead, part.trail
    A = tri.A
    horizon = min(options.reduction_horizon, tri.horizon)
    red = triangular_reduction(A.block(lead, lead), A.block(lead, trail), A.block(trail, trail),
                               part, horizon, alpha=cert.alpha, settings=options.settings)
    C = tri.C.evaluate_many(red.times)
    CS = C @ red.S
    c1_defect = float(np.abs(CS[:, :, lead] - C[:, :, lead]).max())
    C2t = C[:, :, lead] @ red.S[:, lead, trail] + C[:, :, trail] @ red.S[:, trail, trail]
    return {
        "reduction": red.to_dict(),
        "c1_defect": c1_defect,
        "c2_tilde_defect": float(np.abs(CS[:, :, trail] - C2t).max()),
        "sup_c2_tilde": float(np.linalg.norm(C2t, 2, axis=(1, 2)).max()),
    }


def analyze(sys: LtvSystem, options: AnalysisOptions | None = None) -> DetectabilityReport:
    """Ternary detectability verdict with the certificates that support it."""
    options = options or AnalysisOptions()
    b = _Builder(sys, options)
    n = sys.n
    horizon = min(sys.horizon, options.horizon)
    pinned = options.k
    if pinned is not None and not 0 <= pinned <= n:
        raise ValueError(f"pinned k={pinned} outside [0, {n}]")

    try:
        flow = run_qr_flow(sys, horizon=horizon, settings=options.settings)
    except (LtvError, ValueError) as exc:
        return b.fail("qrflow", exc)
    already = sys.is_upper_triangular() or (pinned is not None and sys.is_block_triangular(BlockPartition(n, pinned)))
    tri = sys if already else triangularized_system(sys, flow)
    b.fields["triangularized"] = not already

    gap = default_gap(sys) if options.gap is None else options.gap
    k = pinned
    try:
        est = estimate_exponents(flow, options.window, gap, options.exponent_starts)
        b.fields["exponents"] = est.to_dict()
        if k is None:
            if not est.ordered:
                b.notes.append("growth rates are not ordered with the stable ones last")
                return b.done(INCONCLUSIVE, "exponents")
            k = est.k
    except NoGapError as exc:
        b.fields["exponents"] = exc.estimate.to_dict() if hasattr(exc, "estimate") else None
        if k is None:
            return b.fail("exponents", exc)
        b.notes.append(f"exponents: {exc} (k pinned to {k})")
    except ValueError as exc:
        return b.fail("exponents", exc)
    b.fields["k"] = k

    try:
        cert = certify_dichotomy(tri, k, options.grid, options.tol, options.settings, options.seed)
    except (LtvError, ValueError) as exc:
        return b.fail("dichotomy", exc)
    b.fields["dichotomy"] = cert
    part = BlockPartition(n, k)

    if options.route == "diagonal" and 0 < k < n:
        try:
            b.fields["transformed_output"] = _diagonal_route(b, tri, part, cert, options)
        except (LtvError, ValueError) as exc:
            return b.fail("reduce", exc)
    return _observe_and_decide(b, tri, part, options)


def analyze_diagonal(sys: LtvSystem, part: BlockPartition, options: AnalysisOptions | None = None) -> DetectabilityReport:
    """The same decision for a system already in block-diagonal form."""
    options = options or AnalysisOptions()
    if part.n != sys.n:
        raise ValueError(f"partition for n={part.n} does not match system with n={sys.n}")
    if not sys.is_block_diagonal(part):
        raise FormError("off-diagonal blocks of A are not identically zero")
    b = _Builder(sys, options)
    b.fields["k"] = part.k
    try:
        cert = certify_dichotomy(sys, part.k, options.grid, options.tol, options.settings, options.seed)
    except (LtvError, ValueError) as exc:
        return b.fail("dichotomy", exc)
    b.fields["dichotomy"] = cert
    return _observe_and_decide(b, sys, part, options)
