"""Direct four-parameter sinusoid fit ``k*sin(a*x + b) + c``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from ..errors import FitFailureError, InvalidInputError

N_FREQUENCIES = 32
N_REFINE = 3


@dataclass(frozen=True)
class SinusoidParams:
    k: float
    a: float
    b: float
    c: float

    def __call__(self, x):
        return self.k * np.sin(self.a * np.asarray(x, dtype=float) + self.b) + self.c

    def as_array(self):
        return np.array([self.k, self.a, self.b, self.c])

    def canonical(self):
        """Equivalent parameters with ``k >= 0``, ``a >= 0`` and ``b`` in ``[-pi, pi)``."""
        k, a, b, c = self.k, self.a, self.b, self.c
        if a < 0:
            # k sin(-|a|x + b) = k sin(|a|x + pi - b)
            a, b = -a, math.pi - b
        if k < 0:
            k, b = -k, b + math.pi
        b = (b + math.pi) % (2 * math.pi) - math.pi
        if b >= math.pi:
            b -= 2 * math.pi
        return SinusoidParams(float(k), float(a), float(b), float(c))


def _linear_at(a, x, y):
    basis = np.column_stack([np.sin(a * x), np.cos(a * x), np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    resid = y - basis @ coef
    p, q, c = coef
    # p sin(ax) + q cos(ax) = k sin(ax + b) with k = hypot(p, q), b = atan2(q, p)
    return float(resid @ resid), SinusoidParams(math.hypot(p, q), a, math.atan2(q, p), c)


def frequency_grid(x):
    xs = np.unique(np.asarray(x, dtype=float))
    span = xs[-1] - xs[0]
    step = float(np.min(np.diff(xs)))
    lo = 2 * math.pi / (span * 10)
    hi = 2 * math.pi / (step * 2)
    return np.geomspace(lo, hi, N_FREQUENCIES)


def fit_sinusoid(x, y, max_nfev=2000):
    """Least-squares sinusoid, multi-started over a log-spaced frequency grid.

    At each trial frequency the amplitude, phase and offset enter linearly and
    are solved exactly; the best few starts are then refined jointly.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise InvalidInputError("x and y lengths differ")
    if len(x) < 4:
        raise InvalidInputError(f"need at least 4 samples, got {len(x)}")
    if np.unique(x).size < 2:
        raise InvalidInputError("x must take at least two distinct values")
    scale = float(np.max(np.abs(y - y.mean()))) if len(y) else 0.0
    if scale == 0.0:
        return SinusoidParams(0.0, 1.0, 0.0, float(y.mean()))

    starts = sorted((_linear_at(a, x, y) for a in frequency_grid(x)), key=lambda t: t[0])

    def resid(v):
        return v[0] * np.sin(v[1] * x + v[2]) + v[3] - y

    best, best_cost = None, math.inf
    for cost0, p0 in starts[:N_REFINE]:
        try:
            sol = least_squares(resid, p0.as_array(), method="lm", xtol=1e-15, ftol=1e-15,
                                gtol=1e-15, max_nfev=max_nfev)
        except (ValueError, np.linalg.LinAlgError):
            continue
        cand, cost = sol.x, float(sol.fun @ sol.fun)
        if not np.all(np.isfinite(cand)):
            continue
        if cost0 < cost:
            cand, cost = p0.as_array(), cost0
        if cost < best_cost:
            best, best_cost = cand, cost
    if best is None:
        raise FitFailureError("sinusoid refinement failed from every start", starts[0][0])
    return SinusoidParams(*(float(v) for v in best)).canonical()
