"""System-definition files.

A system file is TOML. Either give the full coefficients ``A`` and ``C`` or an
upper block-triangular form through ``partition`` and ``blocks``::

    name = "diag_observed"
    horizon = 100.0            # optional; coefficient domain [0, horizon]

    [A]
    kind = "constant"
    value = [[1.0, 0.0], [0.0, -1.0]]

    [C]
    kind = "periodic"
    offset = [[0.0, 0.0]]
    terms = [{row = 0, col = 0, amplitude = 1.0, frequency = 1.0, func = "cos"}]

Block form::

    [partition]
    k = 1
    [blocks.B11]  ...
    [blocks.B12]  ...
    [blocks.B22]  ...
    [blocks.C1]   ...
    [blocks.C2]   ...

Coefficient kinds: ``constant`` (``value``), ``periodic`` (``offset``,
``terms``), ``piecewise`` (``starts``, ``values``) and ``sampled``
(``times``, ``values``).
"""

from __future__ import annotations

import re
import sys as _sys
from pathlib import Path

import numpy as np

if _sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import LtvError, ParseError
from .system import (BlockPartition, Constant, LtvSystem, Periodic, PiecewiseConstant, Sampled,
                     TrigTerm, assemble_block_triangular)

KINDS = ("constant", "periodic", "piecewise", "sampled")
BLOCKS = ("B11", "B12", "B22", "C1", "C2")


def _line_of(text: str, table: str | None, key: str | None) -> int | None:
    """Best-effort line number of ``key`` inside ``[table]`` (or of the table header)."""
    lines = text.splitlines()
    start = 0
    if table:
        header = re.compile(r"^\s*\[\s*" + re.escape(table) + r"\s*\]\s*(#.*)?$")
        hits = [i for i, ln in enumerate(lines) if header.match(ln)]
        if not hits:
            return None
        start = hits[0]
        if key is None:
            return start + 1
    if key is None:
        return None
    pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for i in range(start + (1 if table else 0), len(lines)):
        if table and i > start and lines[i].lstrip().startswith("[") and not pat.match(lines[i]):
            break
        if pat.match(lines[i]):
            return i + 1
    return start + 1 if table else None


class _Ctx:
    def __init__(self, text):
        self.text = text

    def error(self, message, table=None, key=None):
        field = ".".join(x for x in (table, key) if x)
        return ParseError(message, field=field or None, line=_line_of(self.text, table, key))


def _array(ctx, entry, table, key, ndim):
    if key not in entry:
        raise ctx.error(f"missing '{key}'", table)
    try:
        arr = np.asarray(entry[key], dtype=float)
    except (TypeError, ValueError):
        raise ctx.error(f"'{key}' must be a numeric array", table, key) from None
    if ndim == 3 and arr.ndim == 1:
        arr = arr[:, None, None]      # scalar pieces
    elif ndim == 2 and arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != ndim:
        raise ctx.error(f"'{key}' must be a {ndim}-dimensional array, got {arr.ndim}", table, key)
    if not np.all(np.isfinite(arr)):
        raise ctx.error(f"'{key}' has non-finite entries", table, key)
    return arr


def _coefficient(ctx, entry, table, t_max):
    if not isinstance(entry, dict):
        raise ctx.error("coefficient must be a table", table)
    kind = entry.get("kind")
    if kind not in KINDS:
        raise ctx.error(f"unknown coefficient kind {kind!r}; expected one of {', '.join(KINDS)}",
                        table, "kind")
    try:
        if kind == "constant":
            return Constant(_array(ctx, entry, table, "value", 2), t_max=t_max)
        if kind == "periodic":
            offset = _array(ctx, entry, table, "offset", 2)
            terms = []
            for j, term in enumerate(entry.get("terms", [])):
                if not isinstance(term, dict):
                    raise ctx.error(f"term {j} must be an inline table", table, "terms")
                try:
                    terms.append(TrigTerm(**term))
                except TypeError as exc:
                    raise ctx.error(f"term {j}: {exc}", table, "terms") from None
            return Periodic(offset, tuple(terms), t_max=t_max)
        if kind == "piecewise":
            starts = _array(ctx, entry, table, "starts", 1)
            return PiecewiseConstant(starts, _array(ctx, entry, table, "values", 3), t_max=t_max)
        times = _array(ctx, entry, table, "times", 1)
        return Sampled(times, _array(ctx, entry, table, "values", 3))
    except ParseError:
        raise
    except (LtvError, ValueError) as exc:
        raise ctx.error(str(exc), table) from None


def parse_system(text: str, source: str = "<string>") -> tuple[LtvSystem, dict]:
    """System and the remaining metadata (``name``, ``expected``, ``partition`` ...)."""
    ctx = _Ctx(text)
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{source}: invalid TOML: {exc}", line=getattr(exc, "lineno", None)) from None
    horizon = doc.get("horizon", np.inf)
    if not isinstance(horizon, (int, float)) or horizon <= 0:
        raise ctx.error("'horizon' must be a positive number", None, "horizon")
    name = str(doc.get("name", Path(source).stem))
    meta = {k: v for k, v in doc.items() if k not in ("A", "C", "blocks")}
    has_full = "A" in doc or "C" in doc
    if "blocks" in doc:
        if has_full:
            raise ctx.error("give either A and C or blocks, not both", "blocks")
        part_def = doc.get("partition")
        if not isinstance(part_def, dict) or "k" not in part_def:
            raise ctx.error("block form needs [partition] with k", "partition", "k")
        blocks = doc["blocks"]
        for label in BLOCKS:
            if label not in blocks:
                raise ctx.error(f"missing block {label}", f"blocks.{label}")
        coeffs = {label: _coefficient(ctx, blocks[label], f"blocks.{label}", horizon) for label in BLOCKS}
        n = coeffs["B11"].rows + coeffs["B22"].rows
        try:
            part = BlockPartition(n, int(part_def["k"]))
            sys = assemble_block_triangular(coeffs["B11"], coeffs["B12"], coeffs["B22"],
                                            coeffs["C1"], coeffs["C2"], part, name=name)
        except (LtvError, ValueError) as exc:
            raise ctx.error(str(exc), "blocks") from None
        return sys, meta
    for label in ("A", "C"):
        if label not in doc:
            raise ctx.error(f"missing coefficient table [{label}]", label)
    A = _coefficient(ctx, doc["A"], "A", horizon)
    C = _coefficient(ctx, doc["C"], "C", horizon)
    try:
        sys = LtvSystem(A, C, name=name)
    except (LtvError, ValueError) as exc:
        raise ctx.error(str(exc), "C") from None
    if "partition" in doc:
        k = doc["partition"].get("k") if isinstance(doc["partition"], dict) else None
        if not isinstance(k, int) or not 0 <= k <= sys.n:
            raise ctx.error(f"partition k must be an integer in [0, {sys.n}]", "partition", "k")
    return sys, meta


def load_system(path) -> tuple[LtvSystem, dict]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read system file {path}: {exc.strerror or exc}", field="path") from None
    return parse_system(text, str(path))
