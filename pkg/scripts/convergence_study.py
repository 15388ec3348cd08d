"""Grid convergence of the Perron eigenvalue.

For ``r = x``, ``a = x``, ``b(x, y) = 2 / y`` in ``X_2`` the eigenvalue is
exactly 1; the script reports ``lambda*`` and its error for a sequence of
grid sizes, plus the observed order between consecutive grids.  Truncation of
the domain at ``x_min`` bounds the error from below, so the order flattens
once the cell error falls under that floor.

Usage::

    python scripts/convergence_study.py [--sizes 64 128 256 512 1024]
"""
from __future__ import annotations

import argparse

import numpy as np

from gfrag.characteristics import CharacteristicFlow
from gfrag.evolution_spectral import EvolutionEngine
from gfrag.fragmentation import linear_absorption, uniform_binary
from gfrag.growth_model import classify_regime, linear_rate
from gfrag.transport import TransportOperator
from gfrag.weighted_space import build_grid, power_space


def eigenvalue(n: int, x_min: float, x_max: float) -> float:
    r = linear_rate()
    op = TransportOperator(CharacteristicFlow(r, classify_regime(r)), build_grid(x_min, x_max, n),
                           power_space(2.0), linear_absorption())
    engine = EvolutionEngine(op, uniform_binary(), override=True)
    return engine.perron_eigenpair().lambda_star


def main() -> None:
    p = argparse.ArgumentParser(description="Grid convergence of lambda* for the exactly solvable case.")
    p.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256, 512, 1024])
    p.add_argument("--x-min", type=float, default=1e-4)
    p.add_argument("--x-max", type=float, default=50.0)
    args = p.parse_args()

    print(f"{'n':>6} {'lambda*':>18} {'error':>12} {'order':>7}")
    prev = None
    for n in args.sizes:
        lam = eigenvalue(n, args.x_min, args.x_max)
        err = abs(lam - 1.0)
        order = "" if prev is None or err == 0 else f"{np.log2(prev / err):7.2f}"
        print(f"{n:6d} {lam:18.12f} {err:12.3e} {order:>7}")
        prev = err


if __name__ == "__main__":
    main()
