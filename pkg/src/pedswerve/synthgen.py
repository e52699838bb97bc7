"""Synthetic perpendicular-crossing encounters with a planted swerve.

The swerver walks along +x and crosses x = 0 at mid-duration; the other
pedestrian walks along +y on the line x = X0, with X0 chosen so that the
unperturbed straight paths pass at exactly ``crossing_offset``.

A planted model sees ``x`` measured from the start of the approach window,
which is found self-consistently (the window depends on the swerve, the swerve
on the window origin). A planted quadratic is solved implicitly at every
frame, i.e. ``y(t) = f(x(t), D(t))`` with ``D(t)`` the distance at the
swerved position itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .errors import InvalidInputError
from .swerve import QuadraticSwerveParams, eval_quadratic
from .symreg.sinusoid import SinusoidParams
from .trajectory import Encounter, Trajectory

MAX_ORIGIN_ITERATIONS = 25


@dataclass(frozen=True)
class ScenarioSpec:
    swerver_speed: float = 100.0
    other_speed: float = 100.0
    crossing_offset: float = 50.0
    planted_model: QuadraticSwerveParams | SinusoidParams | None = None
    noise_sigma: float = 0.0
    fps: float = 30.0
    duration: float = 4.0
    seed: int = 0
    approach_half_window: int | None = None
    swerver_id: str = "1"
    other_id: str = "2"

    def __post_init__(self):
        for name in ("swerver_speed", "other_speed", "fps", "duration"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidInputError(f"{name} must be positive, got {v}")
        if not (math.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise InvalidInputError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not (math.isfinite(self.crossing_offset) and self.crossing_offset >= 0):
            raise InvalidInputError(f"crossing_offset must be >= 0, got {self.crossing_offset}")
        if self.swerver_id == self.other_id:
            raise InvalidInputError("pedestrian ids must differ")
        if not isinstance(self.planted_model, (QuadraticSwerveParams, SinusoidParams, type(None))):
            raise InvalidInputError(f"unsupported planted model {type(self.planted_model).__name__}")

    @property
    def n_frames(self):
        return int(round(self.duration * self.fps)) + 1

    @property
    def half_window(self):
        if self.approach_half_window is not None:
            return int(self.approach_half_window)
        return max(1, int(round(self.fps)))


def nominal_paths(spec):
    """Unperturbed swerver and other positions, each ``(n, 2)``."""
    t = np.arange(spec.n_frames) / spec.fps - spec.duration / 2
    vs, vo = spec.swerver_speed, spec.other_speed
    x0 = spec.crossing_offset * math.hypot(vs, vo) / vo
    swerver = np.column_stack([vs * t, np.zeros_like(t)])
    other = np.column_stack([np.full_like(t, x0), vo * t])
    return swerver, other


def _solve_frame(p, xm, xa, ox, oy, guess):
    a0, a1, a2, a3, a4, a5 = p.as_array()
    dx = xa - ox

    def g(y):
        d = math.hypot(dx, y - oy)
        return y - (a0 + a1 * xm + a2 * d + a3 * xm * xm + a4 * d * d + a5 * xm * d)

    def dg(y):
        d = math.hypot(dx, y - oy)
        if d == 0:
            return 1.0
        return 1.0 - (a2 + 2 * a4 * d + a5 * xm) * (y - oy) / d

    y = guess
    for _ in range(100):
        slope = dg(y)
        if slope == 0:
            break
        step = g(y) / slope
        y -= step
        if abs(step) <= 1e-13 * (1.0 + abs(y)):
            if abs(g(y)) <= 1e-9 * (1.0 + abs(y)):
                return y
            break
    # Newton stalled: bracket a root around the guess and bisect.
    width = 1.0
    g0 = g(guess)
    for _ in range(60):
        for lo, hi in ((guess - width, guess), (guess, guess + width)):
            if g(lo) * g(hi) <= 0:
                return brentq(g, lo, hi, xtol=1e-14, rtol=4e-16, maxiter=500)
        width *= 2
    raise InvalidInputError(
        f"planted quadratic has no consistent deviation at x={xm:.3f} (residual {g0:.3g})"
    )


def _planted_y(spec, swerver, other, x_origin):
    p = spec.planted_model
    xm = swerver[:, 0] - x_origin
    if p is None:
        return np.zeros(len(xm))
    if isinstance(p, SinusoidParams):
        return p(xm)
    y = np.empty(len(xm))
    d_nom = math.hypot(*(swerver[0] - other[0]))
    guess = float(eval_quadratic(p, xm[0], d_nom))
    for k in range(len(xm)):
        guess = y[k] = _solve_frame(p, xm[k], swerver[k, 0], other[k, 0], other[k, 1], guess)
    return y


def _window_start(swerver, y, other, half):
    d = np.hypot(swerver[:, 0] - other[:, 0], y - other[:, 1])
    return max(0, int(np.argmin(d)) - half)


def generate_clean(spec):
    """Noise-free swerver positions, other positions and the x origin used by the model."""
    swerver, other = nominal_paths(spec)
    half = spec.half_window
    start = _window_start(swerver, np.zeros(len(swerver)), other, half)
    seen = set()
    for _ in range(MAX_ORIGIN_ITERATIONS):
        seen.add(start)
        y = _planted_y(spec, swerver, other, swerver[start, 0])
        new = _window_start(swerver, y, other, half)
        if new == start:
            break
        if new in seen:
            # two-cycle between candidate origins: settle on the earlier one
            start = min(start, new)
            y = _planted_y(spec, swerver, other, swerver[start, 0])
            break
        start = new
    else:
        raise InvalidInputError("approach window origin did not settle")
    swerver = swerver.copy()
    swerver[:, 1] = y
    return swerver, other, float(swerver[start, 0])


def generate_encounter(spec):
    """Build one encounter and the noise-free swerver deviation series.

    Returns ``(encounter, y_true)``. Gaussian noise of ``noise_sigma`` is added
    independently to every coordinate of both pedestrians; the same seed
    always yields the same encounter.
    """
    swerver, other, _ = generate_clean(spec)
    rng = np.random.default_rng(spec.seed)
    y_true = swerver[:, 1].copy()
    if spec.noise_sigma > 0:
        swerver = swerver + rng.normal(0.0, spec.noise_sigma, swerver.shape)
        other = other + rng.normal(0.0, spec.noise_sigma, other.shape)
    frames = np.arange(spec.n_frames)
    enc = Encounter(
        Trajectory(spec.swerver_id, frames, swerver, spec.fps),
        Trajectory(spec.other_id, frames, other, spec.fps),
    )
    return enc, y_true


def perturb_quadratic(p, rel, rng):
    """Multiply every coefficient by ``1 + rel * u`` with ``u`` uniform on [-1, 1]."""
    a = p.as_array()
    return QuadraticSwerveParams.from_array(a * (1.0 + rel * rng.uniform(-1.0, 1.0, a.shape)))


def with_seed(spec, seed):
    return replace(spec, seed=seed)
