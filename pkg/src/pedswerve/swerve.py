"""Multivariate quadratic swerve model ``y(x, D)``.

``x`` is the distance travelled along the direction of motion, ``D`` the
distance to the other pedestrian and ``y`` the lateral deviation, all in cm.
The model is not translation invariant in ``x``: shifting the origin of ``x``
is absorbed by ``a0``, ``a1`` and ``a5``, so fits are only comparable when
``x`` is measured from the same reference (the approach-window start).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateFitError, InputError, InvalidInputError

MIN_SAMPLES = 6
RELIABLE_SAMPLES = 20
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class QuadraticSwerveParams:
    a0: float = 0.0
    a1: float = 0.0
    a2: float = 0.0
    a3: float = 0.0
    a4: float = 0.0
    a5: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise InvalidInputError("swerve coefficients must be finite")

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float).ravel()
        if a.shape != (6,):
            raise InvalidInputError(f"expected 6 coefficients, got {a.size}")
        return cls(*(float(v) for v in a))

    def as_array(self):
        return np.array([self.a0, self.a1, self.a2, self.a3, self.a4, self.a5], dtype=float)


@dataclass(frozen=True)
class FitDiagnostics:
    rmse: float
    r_squared: float
    n_points: int
    condition_estimate: float

    @property
    def reliable(self):
        return self.n_points >= RELIABLE_SAMPLES


@dataclass(frozen=True, eq=False)
class ParamDistribution:
    mean: np.ndarray
    covariance: np.ndarray
    n_encounters: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.covariance, dtype=float)
        if mean.shape != (6,) or cov.shape != (6, 6):
            raise InvalidInputError("distribution needs a 6-vector mean and a 6x6 covariance")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise InvalidInputError("distribution entries must be finite")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if not np.allclose(cov, cov.T, rtol=1e-9, atol=1e-12 * scale):
            raise InvalidInputError("covariance is not symmetric")
        if np.min(np.linalg.eigvalsh(cov)) < -1e-9 * scale:
            raise InvalidInputError("covariance is not positive semi-definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    def mean_params(self):
        return QuadraticSwerveParams.from_array(self.mean)

    def sample(self, rng, size=None):
        draws = rng.multivariate_normal(self.mean, self.covariance, size=size, method="eigh")
        if size is None:
            return QuadraticSwerveParams.from_array(draws)
        return [QuadraticSwerveParams.from_array(d) for d in draws]


def design_matrix(x, d):
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    return np.column_stack([np.ones_like(x), x, d, x * x, d * d, x * d])


def eval_quadratic(p, x, d):
    a0, a1, a2, a3, a4, a5 = p.as_array()
    return a0 + a1 * x + a2 * d + a3 * x * x + a4 * d * d + a5 * x * d


def fit_quadratic(samples, standardize=True):
    """Least-squares fit of the six coefficients by Householder QR.

    ``samples`` is an ``(n, 3)`` array-like of ``(x, D, y)`` rows. With
    ``standardize`` the non-constant basis columns are centred and scaled
    before factorisation and the coefficients mapped back afterwards.
    """
    s = np.asarray(samples, dtype=float)
    if s.ndim != 2 or s.shape[1] != 3:
        raise InvalidInputError("samples must be (n, 3) rows of (x, D, y)")
    n = len(s)
    if n < MIN_SAMPLES:
        raise DegenerateFitError(f"need at least {MIN_SAMPLES} samples, got {n}")
    if not np.all(np.isfinite(s)):
        raise InvalidInputError("samples contain non-finite values")
    x, d, y = s.T
    basis = design_matrix(x, d)

    if standardize:
        mu = basis[:, 1:].mean(axis=0)
        sd = basis[:, 1:].std(axis=0)
        if np.any(sd == 0):
            raise DegenerateFitError("constant basis column; design is rank deficient", np.inf)
        a = np.column_stack([basis[:, :1], (basis[:, 1:] - mu) / sd])
    else:
        a = basis

    q, r = np.linalg.qr(a, mode="reduced")
    sv = np.linalg.svd(r, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if not cond < MAX_CONDITION:
        raise DegenerateFitError(f"design matrix is rank deficient (condition {cond:.3g})", cond)
    beta = np.linalg.solve(r, q.T @ y)

    if standardize:
        coef = np.empty(6)
        coef[1:] = beta[1:] / sd
        coef[0] = beta[0] - float(coef[1:] @ mu)
    else:
        coef = beta

    resid = y - basis @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else float("-inf")
    diag = FitDiagnostics(float(np.sqrt(ss_res / n)), r2, n, cond)
    return QuadraticSwerveParams.from_array(coef), diag


def fit_region(region, **kw):
    return fit_quadratic(region.samples(), **kw)


def predict_trajectory(p, x_path, other_path, d0):
    """Roll the model forward, feeding each frame the previous frame's distance.

    ``other_path`` holds the other pedestrian's positions in the same frame as
    ``x_path`` (and the predicted ``y``); ``d0`` is the distance used for the
    very first frame.
    """
    x = np.asarray(x_path, dtype=float)
    other = np.asarray(other_path, dtype=float).reshape(-1, 2)
    if len(x) == 0:
        raise InvalidInputError("empty path")
    if len(other) != len(x):
        raise InvalidInputError(f"path lengths differ: {len(x)} vs {len(other)}")
    return kernels.predict_closed_loop(p.as_array(), x, other, d0)


def aggregate_params(fits):
    fits = list(fits)
    if not fits:
        raise InvalidInputError("no fits to aggregate")
    m = np.array([f.as_array() for f in fits])
    mean = m.mean(axis=0)
    if len(fits) == 1:
        cov = np.zeros((6, 6))
    else:
        cov = np.cov(m, rowvar=False, ddof=1)
        cov = 0.5 * (cov + cov.T)
    return ParamDistribution(mean, cov, len(fits))


def params_to_json(p, diag=None):
    out = {"a": [float(v) for v in p.as_array()]}
    if diag is not None:
        out.update(rmse_cm=diag.rmse, r2=diag.r_squared, n=diag.n_points)
    return out


def _field(obj, name, size):
    if not isinstance(obj, dict) or name not in obj:
        raise InputError(f"JSON is missing required field {name!r}")
    try:
        v = np.asarray(obj[name], dtype=float).ravel()
    except (TypeError, ValueError):
        raise InputError(f"field {name!r} must be a list of numbers") from None
    if v.size != size or not np.all(np.isfinite(v)):
        raise InputError(f"field {name!r} must hold {size} finite numbers")
    return v


def params_from_json(obj):
    return QuadraticSwerveParams.from_array(_field(obj, "a", 6))


def distribution_to_json(dist):
    return {
        "mean": [float(v) for v in dist.mean],
        "covariance": [float(v) for v in np.asarray(dist.covariance).ravel()],
        "n_encounters": int(dist.n_encounters),
    }


def distribution_from_json(obj):
    return ParamDistribution(
        _field(obj, "mean", 6),
        _field(obj, "covariance", 36).reshape(6, 6),
        int(obj.get("n_encounters", 0)),
    )
