"""Analyse the bundled example suite and print one verdict line per system.

    python scripts/run_suite.py [--extras] [--out DIR]

With ``--out`` every report is also written as ``DIR/<name>.json``.
"""

import argparse
import time
from pathlib import Path

from ltvdetect import analyze
from ltvdetect.report import _clean, dumps
from ltvdetect.bundled import EXTRAS, SUITE, expected_verdict, load_example


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--extras", action="store_true", help="also run the additional examples")
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()
    names = list(SUITE) + (list(EXTRAS) if args.extras else [])
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
    mismatches = 0
    for name in names:
        t = time.perf_counter()
        r = analyze(load_example(name)[0])
        want = expected_verdict(name)
        ok = want is None or r.verdict == want
        mismatches += not ok
        mu = f"{r.decay.mu:.4f}" if r.decay is not None and r.decay.valid else "-"
        print(f"{name:24s} {r.verdict:15s} expected {str(want):15s} k={r.k} mu={mu} "
              f"stage={r.stage} ({time.perf_counter() - t:.1f}s)")
        if args.out:
            (args.out / f"{name}.json").write_text(dumps(_clean(r.to_dict())))
    print(f"{len(names) - mismatches}/{len(names)} verdicts as expected")
    raise SystemExit(1 if mismatches else 0)


if __name__ == "__main__":
    main()
