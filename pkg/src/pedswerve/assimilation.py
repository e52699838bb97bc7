"""Online correction of swerve predictions from streaming observations.

Two predictors are replayed frame by frame over an approach region:

* ``dynamic``: an open-loop extrapolation ``y_e`` of the quadratic model is
  shifted by the observed-minus-estimated offset at the latest correction
  frame, ``y_p(t) = y_e(t) + y(t_i) - y_e(t_i)``.
* ``ukf``: an unscented Kalman filter on ``[y, vy]`` with a constant-velocity
  process model.

The replay is one step ahead: the prediction reported for frame ``t`` is
formed from observations at frames before ``t`` only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CausalityError, InvalidConfigError, InvalidInputError, InvalidStateError
from .swerve import (
    ParamDistribution,
    QuadraticSwerveParams,
    aggregate_params,
    fit_quadratic,
    predict_trajectory,
)

PSD_TOL = -1e-9
METHODS = ("dynamic", "ukf")


@dataclass(frozen=True)
class DynamicUpdateConfig:
    correction_interval: int = 5
    bootstrap_frames: int = 10
    base_params: QuadraticSwerveParams | ParamDistribution | None = None

    def __post_init__(self):
        if int(self.correction_interval) < 1:
            raise InvalidConfigError(f"correction_interval must be >= 1, got {self.correction_interval}")
        if int(self.bootstrap_frames) < 1:
            raise InvalidConfigError(f"bootstrap_frames must be >= 1, got {self.bootstrap_frames}")

    def correction_frames(self, n):
        return np.arange(self.bootstrap_frames, n, self.correction_interval)


@dataclass(frozen=True)
class UkfConfig:
    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0
    process_noise_spectral: float = 1e4
    measurement_noise_var: float = 1.0
    dt: float = 1.0 / 30.0
    initial_velocity_std: float = 50.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise InvalidConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.measurement_noise_var > 0:
            raise InvalidConfigError("measurement_noise_var must be positive")
        if not self.dt > 0:
            raise InvalidConfigError("dt must be positive")
        if self.process_noise_spectral < 0:
            raise InvalidConfigError("process_noise_spectral must be >= 0")
        if 2 + self.kappa <= 0:
            raise InvalidConfigError("n + kappa must be positive")

    def transition(self):
        return np.array([[1.0, self.dt], [0.0, 1.0]])

    def process_cov(self):
        dt, q = self.dt, self.process_noise_spectral
        return q * np.array([[dt**3 / 3, dt**2 / 2], [dt**2 / 2, dt]])


@dataclass(frozen=True, eq=False)
class StateEstimate:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).reshape(2))
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float).reshape(2, 2))


@dataclass(frozen=True, eq=False)
class PredictionRun:
    frames: np.ndarray
    y_pred: np.ndarray
    y_obs: np.ndarray
    method: str
    n_bootstrap: int = 0
    errors: np.ndarray = field(init=False)

    def __post_init__(self):
        n = len(self.frames)
        if len(self.y_pred) != n or len(self.y_obs) != n:
            raise InvalidInputError("prediction run series lengths differ")
        object.__setattr__(self, "errors", np.abs(np.asarray(self.y_pred) - np.asarray(self.y_obs)))

    @property
    def rmse(self):
        return _rms(self.errors)


def _rms(e):
    e = np.asarray(e, dtype=float)
    if not len(e):
        return float("nan")
    with np.errstate(over="ignore"):  # a diverged rollout reports inf
        return float(np.sqrt(np.mean(e * e)))


# -- initial estimate ----------------------------------------------------------

def training_params(training, pooling="pooled"):
    """Coefficients to extrapolate with, from whatever training source is given.

    ``training`` may be a :class:`QuadraticSwerveParams`, a
    :class:`ParamDistribution` (its mean is used), or a sequence of approach
    regions / ``(n, 3)`` sample arrays. Sequences are either stacked into one
    least-squares fit (``pooling="pooled"``) or fitted one by one and averaged
    (``pooling="average"``).
    """
    if isinstance(training, QuadraticSwerveParams):
        return training
    if isinstance(training, ParamDistribution):
        return training.mean_params()
    items = list(training) if training is not None else []
    if not items:
        raise InvalidInputError("empty training set")
    blocks = [np.asarray(t.samples() if hasattr(t, "samples") else t, dtype=float) for t in items]
    if pooling == "pooled":
        return fit_quadratic(np.vstack(blocks))[0]
    if pooling == "average":
        return aggregate_params([fit_quadratic(b)[0] for b in blocks]).mean_params()
    raise InvalidConfigError(f"unknown pooling {pooling!r}")


def initial_estimate(training, x_path, other_path, n=None, d0=None, pooling="pooled"):
    """Extrapolate the first ``n`` frames from training-derived coefficients."""
    x = np.asarray(x_path, dtype=float)
    other = np.asarray(other_path, dtype=float).reshape(-1, 2)
    n = len(x) if n is None else int(n)
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    if d0 is None:
        raise InvalidInputError("an initial distance is required")
    p = training_params(training, pooling)
    return predict_trajectory(p, x[:n], other[:n], d0)


# -- dynamic update --------------------------------------------------------------

def _latest_observed(y_obs, t):
    """Index of the latest finite observation at or before ``t``, or -1."""
    for j in range(t, -1, -1):
        if math.isfinite(y_obs[j]):
            return j
    return -1


def dynamic_update(y_e, y_obs, cfg):
    """Offset-corrected prediction; missing observations are NaN.

    When the observation at a correction frame is missing the most recent
    earlier observation (and the estimate at that same frame) is used instead.
    """
    y_e = np.asarray(y_e, dtype=float)
    y_obs = np.asarray(y_obs, dtype=float)
    if y_e.shape != y_obs.shape:
        raise InvalidInputError(f"series lengths differ: {len(y_e)} vs {len(y_obs)}")
    y_p = y_e.copy()
    marks = cfg.correction_frames(len(y_e))
    for i, ti in enumerate(marks):
        end = marks[i + 1] if i + 1 < len(marks) else len(y_e)
        j = _latest_observed(y_obs, ti)
        if j >= 0:
            y_p[ti:end] = y_e[ti:end] + (y_obs[j] - y_e[j])
            if j == ti:
                y_p[ti] = y_obs[ti]  # exact, not y_e + (y_obs - y_e) with its rounding
    return y_p


# -- unscented Kalman filter --------------------------------------------------------

def _check_psd(cov):
    if not np.allclose(cov, cov.T, rtol=1e-9, atol=1e-12):
        raise InvalidStateError("covariance is not symmetric")
    w = np.linalg.eigvalsh(0.5 * (cov + cov.T))
    if w[0] < PSD_TOL:
        raise InvalidStateError(f"covariance has negative eigenvalue {w[0]:.3g}")


def _sqrt_psd(m):
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(0.5 * (m + m.T))
        return v * np.sqrt(np.clip(w, 0.0, None))


def ukf_weights(cfg, n=2):
    lam = cfg.alpha**2 * (n + cfg.kappa) - n
    wm = np.full(2 * n + 1, 1.0 / (2 * (n + lam)))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = wm[0] + (1.0 - cfg.alpha**2 + cfg.beta)
    return lam, wm, wc


def sigma_points(mean, cov, cfg):
    """``2n + 1`` sigma points as rows: the mean, then ``mean +/- columns of sqrt((n+lam) P)``."""
    n = len(mean)
    lam, _, _ = ukf_weights(cfg, n)
    s = _sqrt_psd((n + lam) * cov)
    return np.vstack([mean, mean + s.T, mean - s.T])


def _unscented(points, wm, wc):
    mean = wm @ points
    dev = points - mean
    cov = (wc[:, None] * dev).T @ dev
    return mean, cov


def ukf_predict(est, cfg):
    _, wm, wc = ukf_weights(cfg)
    pts = sigma_points(est.mean, est.cov, cfg) @ cfg.transition().T
    mean, cov = _unscented(pts, wm, wc)
    cov = cov + cfg.process_cov()
    return StateEstimate(mean, 0.5 * (cov + cov.T))


def ukf_update(est, z, cfg):
    _, wm, wc = ukf_weights(cfg)
    pts = sigma_points(est.mean, est.cov, cfg)
    zs = pts[:, 0]
    z_hat = wm @ zs
    dz = zs - z_hat
    s = float(wc @ (dz * dz)) + cfg.measurement_noise_var
    pxz = (wc * dz) @ (pts - est.mean)
    gain = pxz / s
    mean = est.mean + gain * (z - z_hat)
    cov = est.cov - s * np.outer(gain, gain)
    cov = 0.5 * (cov + cov.T)
    w, v = np.linalg.eigh(cov)
    if w[0] < 0:
        # round-off can push a tiny eigenvalue below zero
        cov = (v * np.clip(w, 0.0, None)) @ v.T
    return StateEstimate(mean, cov)


def ukf_step(est, z, cfg):
    """One predict/update cycle with the scalar position measurement ``z``."""
    _check_psd(est.cov)
    if not math.isfinite(z):
        raise InvalidInputError("measurement must be finite")
    return ukf_update(ukf_predict(est, cfg), z, cfg)


def ukf_init(z0, cfg):
    return StateEstimate([z0, 0.0], np.diag([cfg.measurement_noise_var, cfg.initial_velocity_std**2]))


# -- replay harness -----------------------------------------------------------------

class ObservationStream:
    """Reveals observations one frame at a time and refuses to look ahead."""

    def __init__(self, values):
        self._values = np.asarray(values, dtype=float)
        self.revealed = 0

    def __len__(self):
        return len(self._values)

    def get(self, t):
        if t >= self.revealed:
            raise CausalityError(f"observation {t} requested before it arrived ({self.revealed} revealed)")
        return float(self._values[t])

    def latest_at_or_before(self, t):
        for j in range(min(t, self.revealed - 1), -1, -1):
            v = self.get(j)
            if math.isfinite(v):
                return j, v
        return -1, float("nan")

    def reveal_next(self):
        self.revealed += 1


def _dynamic_replay(y_e, stream, cfg):
    n = len(stream)
    marks = cfg.correction_frames(n)
    out = np.empty(n)
    for t in range(n):
        k = np.searchsorted(marks, t, side="right") - 1
        out[t] = y_e[t]
        if k >= 0:
            j, v = stream.latest_at_or_before(int(marks[k]))
            if j >= 0:
                out[t] = y_e[t] + v - y_e[j]
        stream.reveal_next()
    return out


def _ukf_replay(stream, cfg):
    n = len(stream)
    out = np.empty(n)
    est = None
    for t in range(n):
        if est is None:
            stream.reveal_next()
            z = stream.get(t)
            if math.isfinite(z):
                est = ukf_init(z, cfg)
                out[t] = z
            else:
                out[t] = float("nan")
            continue
        prior = ukf_predict(est, cfg)
        out[t] = prior.mean[0]
        stream.reveal_next()
        z = stream.get(t)
        est = ukf_update(prior, z, cfg) if math.isfinite(z) else prior
    return out


def run_predictor(region, method, dyn_cfg=None, ukf_cfg=None, training=None, pooling="pooled"):
    """Replay ``region`` through one predictor and collect its errors.

    ``training`` feeds the initial estimate of the dynamic method (falling back
    to ``dyn_cfg.base_params``). The UKF has no model prior, so its frame-0
    value is the initialising observation itself.
    """
    if method not in METHODS:
        raise InvalidConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    if len(region) == 0:
        raise InvalidInputError("empty region")
    dyn_cfg = dyn_cfg or DynamicUpdateConfig()
    stream = ObservationStream(region.y_series)
    if method == "dynamic":
        source = training if training is not None else dyn_cfg.base_params
        if source is None:
            raise InvalidInputError("dynamic update needs training data or base parameters")
        y_e = initial_estimate(source, region.x_series, region.other_xy, d0=region.d_series[0],
                               pooling=pooling)
        y_pred = _dynamic_replay(y_e, stream, dyn_cfg)
    else:
        ukf_cfg = ukf_cfg or UkfConfig(dt=1.0 / region.fps)
        y_pred = _ukf_replay(stream, ukf_cfg)
    nb = min(int(dyn_cfg.bootstrap_frames), len(region))
    return PredictionRun(np.asarray(region.frames), y_pred, np.asarray(region.y_series, dtype=float),
                         method, nb)


def run_metrics(run):
    e = run.errors
    nb = run.n_bootstrap
    return {
        "method": run.method,
        "rmse_cm": _rms(e),
        "max_err_cm": float(np.max(e)) if len(e) else float("nan"),
        "bootstrap_rmse_cm": _rms(e[:nb]),
        "post_rmse_cm": _rms(e[nb:]),
    }


def compare_predictors(runs):
    """One metrics row per run, in input order."""
    runs = list(runs)
    if not runs:
        raise InvalidInputError("no prediction runs to compare")
    return [run_metrics(r) for r in runs]


def summarize_by_method(rows):
    """Mean of each metric over rows sharing a method."""
    out = {}
    for row in rows:
        out.setdefault(row["method"], []).append(row)
    return {
        m: {k: float(np.mean([r[k] for r in rs])) for k in rs[0] if k != "method"}
        for m, rs in out.items()
    }
