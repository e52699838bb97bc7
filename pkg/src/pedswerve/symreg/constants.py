"""Gradient-based refinement of expression constants."""

from __future__ import annotations

import math

import numpy as np

from .. import kernels
from .expr import compile_expr, with_constants


def optimize_constants(e, x, y, rng=None, restarts=0, maxiter=100):
    """Locally minimise MSE over the constants of ``e`` with BFGS.

    Gradients are exact (forward-mode through the compiled program). With
    ``restarts > 0`` and an ``rng``, extra runs start from randomly scaled
    copies of the constants. The result never has a larger MSE than ``e``;
    if nothing improves, ``e`` itself is returned.
    """
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    code, c0 = compile_expr(e)
    if len(c0) == 0:
        return e

    with np.errstate(all="ignore"):
        best = kernels.mse_program(code, c0, x, y)
        best = best if math.isfinite(best) else math.inf
        best_c = c0
        starts = [c0]
        if rng is not None:
            for _ in range(restarts):
                starts.append(c0 * 10.0 ** rng.uniform(-1.0, 1.0, len(c0)))
        for start in starts:
            c, _ = kernels.optimize_program(code, start, x, y, maxiter)
            cand = kernels.mse_program(code, c, x, y)
            if math.isfinite(cand) and cand < best:
                best, best_c = cand, c
    if best_c is c0:
        return e
    return with_constants(e, best_c)
