"""Command-line front end.

Every subcommand reads a system file, runs one analysis, writes
``report.json`` plus CSV curves into the output directory and prints the report
to stdout. Exit status is 0 whenever the analysis ran to a result (negative
verdicts included) and 1 on operational errors.
"""

from __future__ import annotations

import functools
import os
import sys as _sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import report as rep
from .bundled import write_examples
from .config import load_system
from .detect import AnalysisOptions, analyze
from .dichotomy import CertificationGrid, certify_dichotomy, default_gap, estimate_exponents, _declared_pairs
from .errors import CertificationError, LtvError, NoGapError
from .gramian import check_uco, default_starts
from .observer import certify_error_decay, solve_filter_riccati, synthesize_gain
from .propagate import IntegratorSettings
from .qrflow import run_qr_flow, triangularized_system
from .reduce import triangular_reduction
from .system import BlockPartition, LtvSystem

OUT_ENV = "LTVDETECT_OUT"
CSV_STEP = 0.05


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    system_path: Path
    horizon: float = 50.0
    settings: IntegratorSettings = field(default_factory=IntegratorSettings)
    grid: CertificationGrid = field(default_factory=CertificationGrid)
    gramian_starts: int = 32
    sigmas: tuple = (1.0, 2.0, 4.0)
    out_dir: Path = Path(".")
    seed: int = 0

    def __post_init__(self):
        if self.horizon <= 0 or self.gramian_starts < 1 or not self.sigmas or min(self.sigmas) <= 0:
            raise click.BadParameter("horizon, starts and window lengths must be positive")
        out = Path(self.out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise click.BadParameter(f"cannot create output directory {out}: {exc}") from None
        if not os.access(out, os.W_OK):
            raise click.BadParameter(f"output directory {out} is not writable")

    def to_dict(self):
        s = self.settings
        return {
            "horizon": self.horizon,
            "integrator": {"method": s.method, "step": s.step, "rtol": s.rtol, "atol": s.atol},
            "grid": self.grid.to_dict(),
            "gramian_starts": self.gramian_starts,
            "sigmas": list(self.sigmas),
        }


def _common(fn):
    """Options shared by every analysis subcommand."""
    opts = [
        click.option("--system", "system_path", required=True, type=click.Path(dir_okay=False),
                     help="System definition file (TOML)."),
        click.option("--horizon", type=float, default=50.0, show_default=True, help="Analysis horizon T_max."),
        click.option("--method", type=click.Choice(["rk4", "adaptive"]), default="rk4", show_default=True),
        click.option("--step", type=float, default=None, help="Fixed RK4 step (default from bound of A)."),
        click.option("--rtol", type=float, default=1e-10, show_default=True),
        click.option("--atol", type=float, default=1e-12, show_default=True),
        click.option("--n-starts", type=int, default=20, show_default=True, help="Certification starts."),
        click.option("--start-max", type=float, default=20.0, show_default=True),
        click.option("--offsets", type=str, default="0.5,1,2,5,10", show_default=True,
                     help="Comma-separated offsets t - t0."),
        click.option("--gramian-starts", type=int, default=32, show_default=True),
        click.option("--sigma", "sigmas", type=float, multiple=True, help="Gramian window (repeatable)."),
        click.option("--out", "out_dir", type=click.Path(file_okay=False), envvar=OUT_ENV, default=".",
                     show_default=True, help=f"Output directory (env {OUT_ENV})."),
        click.option("--seed", type=int, default=0, show_default=True),
    ]
    for opt in reversed(opts):
        fn = opt(fn)

    @functools.wraps(fn)
    def wrapper(system_path, horizon, method, step, rtol, atol, n_starts, start_max, offsets,
                gramian_starts, sigmas, out_dir, seed, **kw):
        try:
            offs = tuple(float(x) for x in offsets.split(",") if x.strip())
            settings = IntegratorSettings(method=method, step=step, rtol=rtol, atol=atol)
            grid = CertificationGrid(n_starts=n_starts, start_max=start_max, offsets=offs)
        except ValueError as exc:
            raise click.BadParameter(str(exc)) from None
        cfg = RunConfig(fn.__name__.rstrip("_"), Path(system_path), horizon, settings, grid,
                        gramian_starts, tuple(sigmas) or (1.0, 2.0, 4.0), Path(out_dir), seed)
        try:
            sys, meta = load_system(cfg.system_path)
            result = fn(cfg, sys, meta, **kw)
        except LtvError as exc:
            click.echo(f"error: {type(exc).__name__}: {exc}", err=True)
            _sys.exit(1)
        report = rep.build_report(
            cfg.subcommand, result, seed=cfg.seed, config=cfg.to_dict(),
            system={"name": sys.name, "n": sys.n, "p": sys.p, "source": str(cfg.system_path)},
        )
        rep.write_report(cfg.out_dir / "report.json", report)
        click.echo(rep.dumps(report), nl=False)

    return wrapper


def _triangular(sys: LtvSystem, cfg: RunConfig, k=None):
    """``(triangular system, flow or None)``; block-triangular inputs are used as given."""
    if sys.is_upper_triangular() or (k is not None and sys.is_block_triangular(BlockPartition(sys.n, k))):
        return sys, None
    flow = run_qr_flow(sys, horizon=min(sys.horizon, cfg.horizon), settings=cfg.settings)
    return triangularized_system(sys, flow), flow


def _pick_k(sys, cfg, k):
    if k is not None:
        return k
    flow = run_qr_flow(sys, horizon=min(sys.horizon, cfg.horizon), settings=cfg.settings)
    est = estimate_exponents(flow, 10.0, default_gap(sys))
    if est.k is None:
        raise NoGapError("growth rates are not ordered with the stable ones last")
    return est.k


def _samples(t_end):
    return np.arange(0.0, t_end + 1e-12, CSV_STEP)


@click.group(invoke_without_command=True)
@click.option("--examples", type=click.Path(file_okay=False), default=None,
              help="Write the bundled example systems into this directory and exit.")
@click.pass_context
def main(ctx, examples):
    """Exponential dichotomy, observability and detectability of LTV systems."""
    if examples:
        for p in write_examples(examples):
            click.echo(str(p))
        ctx.exit(0)
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


@main.command()
@_common
def qr(cfg, sys, meta):
    """Continuous QR flow: orthogonality, triangular coefficient and growth rates."""
    flow = run_qr_flow(sys, horizon=min(sys.horizon, cfg.horizon), settings=cfg.settings)
    ts = _samples(flow.horizon)
    nu, B = flow.nu_at(ts), flow.b_at(ts)
    n = sys.n
    rows = [[t, *nu[i], *np.diagonal(B[i]), float(np.interp(t, flow.times, flow.orthogonality))]
            for i, t in enumerate(ts)]
    rep.write_csv(cfg.out_dir / "qr.csv",
                  ["t", *[f"nu{i}" for i in range(n)], *[f"b{i}{i}" for i in range(n)], "orthogonality"], rows)
    result = {
        "horizon": flow.horizon,
        "max_orthogonality_defect": float(flow.orthogonality.max()),
        "lower_defect": flow.lower_defect,
        "max_reorthonormalisation_change": flow.max_reorth_change,
        "nu_final": flow.nu[-1].tolist(),
    }
    try:
        result["exponents"] = estimate_exponents(flow, 10.0, default_gap(sys)).to_dict()
    except NoGapError as exc:
        result["exponents"] = exc.estimate.to_dict()
        result["exponents_note"] = str(exc)
    except ValueError as exc:
        result["exponents_note"] = str(exc)
    return result


@main.command()
@_common
@click.option("--k", type=int, default=None, help="Stable dimension (default: from growth rates).")
@click.option("--tol", type=float, default=1e-3, show_default=True)
def dichotomy(cfg, sys, meta, k, tol):
    """Certify the dichotomy bounds and fit (K, alpha)."""
    k = _pick_k(sys, cfg, k)
    tri, flow = _triangular(sys, cfg, k)
    try:
        cert = certify_dichotomy(tri, k, cfg.grid, tol, cfg.settings, cfg.seed)
    except CertificationError as exc:
        return {"k": k, "valid": False, "reason": str(exc),
                "worst_pair": list(exc.worst_pair) if exc.worst_pair else None,
                "triangularized": flow is not None}
    stable, unstable, _, _ = _declared_pairs(tri, k, cfg.grid, cfg.settings, cfg.seed)
    rows = [["stable", a, b, v, cert.K * np.exp(-cert.alpha * abs(b - a))]
            for a, b, v in zip(stable.t0, stable.t, stable.values)]
    rows += [["unstable", a, b, v, cert.K * np.exp(-cert.alpha * abs(b - a))]
             for a, b, v in zip(unstable.t0, unstable.t, unstable.values)]
    rep.write_csv(cfg.out_dir / "pairs.csv", ["family", "t0", "t", "norm", "bound"], rows)
    return {**cert.to_dict(), "valid": True, "triangularized": flow is not None,
            "worst_pair": list(cert.worst_pair) if cert.worst_pair else None}


@main.command()
@_common
def gramian(cfg, sys, meta):
    """Observability Gramians over the window list and the uniform bounds."""
    T = min(sys.horizon, cfg.horizon)
    reports, rows = [], []
    for s in sorted(cfg.sigmas):
        r = check_uco(sys, s, default_starts(sys, s, T, cfg.gramian_starts), settings=cfg.settings)
        reports.append(r)
        rows += [[s, t0, lo, hi] for t0, lo, hi in zip(r.starts, r.lambda_min, r.lambda_max)]
    rep.write_csv(cfg.out_dir / "gramian.csv", ["sigma", "t0", "lambda_min", "lambda_max"], rows)
    best = next((r.sigma for r in reports if r.uco), None)
    return {
        "windows": [{k: v for k, v in r.to_dict().items() if k not in ("starts", "lambda_min", "lambda_max")}
                    for r in reports],
        "uco": best is not None,
        "smallest_sigma": best,
    }


@main.command()
@_common
@click.option("--k", type=int, default=None)
@click.option("--t-trunc", type=float, default=None, help="Truncation time (default horizon + 10/alpha).")
@click.option("--reduction-horizon", type=float, default=20.0, show_default=True)
def reduce(cfg, sys, meta, k, t_trunc, reduction_horizon):
    """Block-diagonal reduction of an upper block-triangular form."""
    k = _pick_k(sys, cfg, k)
    tri, flow = _triangular(sys, cfg, k)
    part = BlockPartition(sys.n, k)
    cert = certify_dichotomy(tri, k, cfg.grid, settings=cfg.settings, seed=cfg.seed)
    A = tri.A
    red = triangular_reduction(A.block(part.lead, part.lead), A.block(part.lead, part.trail),
                               A.block(part.trail, part.trail), part,
                               min(reduction_horizon, tri.horizon), t_trunc,
                               alpha=cert.alpha, settings=cfg.settings)
    every = max(1, int(round(CSV_STEP / (red.times[1] - red.times[0]))))
    idx = np.arange(0, red.times.size, every)
    nS = np.linalg.norm(red.S[idx], 2, axis=(1, 2))
    nSi = np.linalg.norm(red.Sinv[idx], 2, axis=(1, 2))
    Sdot = np.gradient(red.S, red.times, axis=0, edge_order=2)
    raw = red.Sinv @ (A.evaluate_many(red.times) @ red.S - Sdot)
    off = np.linalg.norm(raw[idx][:, part.lead, part.trail], 2, axis=(1, 2))
    rep.write_csv(cfg.out_dir / "reduce.csv", ["t", "norm_S", "norm_Sinv", "offdiag_D"],
                  zip(red.times[idx], nS, nSi, off))
    return {**red.to_dict(), "alpha": cert.alpha, "triangularized": flow is not None}


@main.command()
@_common
@click.option("--k", type=int, default=None)
def observe(cfg, sys, meta, k):
    """Observer gain from the filter Riccati equation and certified error decay."""
    k = _pick_k(sys, cfg, k)
    tri, flow = _triangular(sys, cfg, k)
    part = BlockPartition(sys.n, k)
    T = min(tri.horizon, cfg.horizon)
    ric = None
    if part.n - k:
        ric = solve_filter_riccati(tri.A.block(part.lead, part.lead), tri.C.block(slice(None), part.lead),
                                   horizon=T, settings=cfg.settings)
    L = synthesize_gain(tri, ric)
    decay = certify_error_decay(tri, L, cfg.grid, settings=cfg.settings)
    ts = _samples(T)
    Ls = L.evaluate_many(ts)
    rep.write_csv(cfg.out_dir / "gain.csv",
                  ["t", *[f"L{i}{j}" for i in range(sys.n) for j in range(sys.p)]],
                  ([t, *Ls[i].ravel()] for i, t in enumerate(ts)))
    err = tri.with_injection(L)
    samples, _, _, _ = _declared_pairs(err, err.n, decay.grid, cfg.settings, 0)
    rep.write_csv(cfg.out_dir / "decay.csv", ["t0", "t", "norm"],
                  zip(samples.t0, samples.t, samples.values))
    return {"k": k, "riccati": None if ric is None else ric.to_dict(), "decay": decay.to_dict(),
            "triangularized": flow is not None}


@main.command()
@_common
@click.option("--k", type=int, default=None, help="Pin the stable dimension.")
@click.option("--route", type=click.Choice(["triangular", "diagonal"]), default="triangular", show_default=True)
def analyze_(cfg, sys, meta, k, route):
    """Full detectability analysis with a ternary verdict."""
    opts = AnalysisOptions(k=k, route=route, horizon=cfg.horizon, grid=cfg.grid, sigmas=cfg.sigmas,
                           gramian_starts=cfg.gramian_starts, settings=cfg.settings, seed=cfg.seed)
    r = analyze(sys, opts)
    if r.exponents is not None and "lower" in r.exponents:
        rep.write_csv(cfg.out_dir / "exponents.csv", ["state", "lower", "upper"],
                      ([i, lo, hi] for i, (lo, hi) in enumerate(zip(r.exponents["lower"], r.exponents["upper"]))))
    if r.uco_reports:
        rep.write_csv(cfg.out_dir / "uco.csv", ["sigma", "t0", "lambda_min", "lambda_max"],
                      ([u.sigma, t0, lo, hi] for u in r.uco_reports
                       for t0, lo, hi in zip(u.starts, u.lambda_min, u.lambda_max)))
    out = r.to_dict()
    out.pop("options", None)
    return out


analyze_.name = "analyze"
main.add_command(analyze_, "analyze")


if __name__ == "__main__":
    main()
