"""Step-size convergence of the numerical building blocks.

Prints, for a sequence of halved step sizes, the error of

* the transition matrix of ``diag(1, -1)`` on ``[0, 1]``,
* the observability Gramian of ``a = -1, c = 1`` over ``[0, 1]``,
* the scalar filter Riccati solution ``p' = 2p - p^2 + 1`` at ``t = 2`` against its closed form,

and the observed order ``log2(e_h / e_{h/2})``.
"""

import argparse

import numpy as np

from ltvdetect import Constant, IntegratorSettings, constant_system, observability_gramian, propagate_linear
from ltvdetect.observer import solve_filter_riccati


def transition_error(h):
    exact = np.diag([np.e, np.exp(-1.0)])
    Phi = propagate_linear(Constant(np.diag([1.0, -1.0])), np.eye(2), 0.0, 1.0, IntegratorSettings(step=h))
    return float(np.abs(Phi - exact).max())


def gramian_error(h):
    M = observability_gramian(constant_system([[-1.0]], [[1.0]]), 0.0, 1.0, IntegratorSettings(step=h))
    return abs(float(M[0, 0]) - (1.0 - np.exp(-2.0)) / 2.0)


def riccati_error(h):
    ric = solve_filter_riccati(Constant([[1.0]]), Constant([[1.0]]), horizon=2.0, settings=IntegratorSettings(step=h))
    # reference: closed form of the scalar equation p' = 2p - p^2 + 1, p(0) = 1
    r = np.sqrt(2.0)
    t = ric.times[-1]
    p0 = 1.0
    c = (p0 - 1.0 - r) / (p0 - 1.0 + r)
    e = c * np.exp(-2.0 * r * t)
    exact = 1.0 + r * (1.0 + e) / (1.0 - e)
    return abs(float(ric.P[-1, 0, 0]) - exact)


def main():
    ap = argparse.ArgumentParser(description="RK4 step-halving study")
    ap.add_argument("--h0", type=float, default=0.2)
    ap.add_argument("--levels", type=int, default=5)
    args = ap.parse_args()
    hs = args.h0 / 2.0 ** np.arange(args.levels)
    for label, fn in (("transition", transition_error), ("gramian", gramian_error), ("riccati", riccati_error)):
        errs = [fn(h) for h in hs]
        print(label)
        for i, (h, e) in enumerate(zip(hs, errs)):
            order = f"{np.log2(errs[i - 1] / e):.2f}" if i and e > 0 else "-"
            print(f"  h={h:.5f}  error={e:.3e}  order={order}")


if __name__ == "__main__":
    main()
