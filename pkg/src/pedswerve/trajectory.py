"""Trajectory ingestion, cleaning and approach-region extraction.

Positions are stored as ``(n, 2)`` float arrays in centimetres once scaled;
time is a frame index with the frame rate carried alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegenerateTrajectoryError,
    InvalidConfigError,
    InvalidInputError,
    NoOverlapError,
)


@dataclass(frozen=True)
class TrackPoint:
    frame: int
    pos: tuple[float, float]

    def __post_init__(self):
        if self.frame < 0:
            raise InvalidInputError(f"negative frame {self.frame}")
        if not all(math.isfinite(v) for v in self.pos):
            raise InvalidInputError(f"non-finite position at frame {self.frame}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    ped_id: str
    frames: np.ndarray
    pos: np.ndarray
    fps: float = 30.0

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.int64)
        pos = np.asarray(self.pos, dtype=np.float64).reshape(-1, 2)
        if len(frames) != len(pos):
            raise InvalidInputError(
                f"pedestrian {self.ped_id}: {len(frames)} frames but {len(pos)} positions"
            )
        if len(frames) < 2:
            raise InvalidInputError(f"pedestrian {self.ped_id}: need at least 2 points")
        if np.any(np.diff(frames) <= 0):
            raise InvalidInputError(f"pedestrian {self.ped_id}: frames not strictly increasing")
        if frames[0] < 0:
            raise InvalidInputError(f"pedestrian {self.ped_id}: negative frame index")
        if not np.all(np.isfinite(pos)):
            raise InvalidInputError(f"pedestrian {self.ped_id}: non-finite position")
        if not self.fps > 0:
            raise InvalidConfigError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "pos", pos)

    @classmethod
    def from_points(cls, ped_id, points, fps=30.0):
        return cls(ped_id, [p.frame for p in points], [p.pos for p in points], fps)

    @property
    def points(self):
        return [TrackPoint(int(f), (float(p[0]), float(p[1]))) for f, p in zip(self.frames, self.pos)]

    def __len__(self):
        return len(self.frames)

    def at_frames(self, frames):
        """Positions at the given frames, which must all be present."""
        idx = np.searchsorted(self.frames, frames)
        if np.any(idx >= len(self.frames)) or np.any(self.frames[np.minimum(idx, len(self.frames) - 1)] != frames):
            raise NoOverlapError(f"pedestrian {self.ped_id} does not cover the requested frames")
        return self.pos[idx]

    def net_displacement(self):
        return self.pos[-1] - self.pos[0]


@dataclass(frozen=True, eq=False)
class Encounter:
    swerver: Trajectory
    other: Trajectory
    overlap: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.overlap is None:
            common = np.intersect1d(self.swerver.frames, self.other.frames)
        else:
            common = np.asarray(self.overlap, dtype=np.int64)
            if not (np.all(np.isin(common, self.swerver.frames)) and np.all(np.isin(common, self.other.frames))):
                raise NoOverlapError("overlap frames not covered by both trajectories")
        if len(common) == 0:
            raise NoOverlapError(
                f"pedestrians {self.swerver.ped_id} and {self.other.ped_id} share no frames"
            )
        object.__setattr__(self, "overlap", common)

    def positions(self):
        """Swerver and other positions over the overlap, each ``(m, 2)``."""
        return self.swerver.at_frames(self.overlap), self.other.at_frames(self.overlap)

    def swapped(self):
        return Encounter(self.other, self.swerver, self.overlap)


@dataclass(frozen=True, eq=False)
class ApproachRegion:
    """Swerver coordinates around the point of minimum approach.

    ``x_series`` is re-based to zero at the window start; ``other_xy`` uses the
    same re-based frame, so ``d_series == hypot(x - other_x, y - other_y)``.
    """

    frames: np.ndarray
    x_series: np.ndarray
    y_series: np.ndarray
    d_series: np.ndarray
    min_frame: int
    other_xy: np.ndarray = None
    x_origin: float = 0.0
    fps: float = 30.0

    def __post_init__(self):
        n = len(self.frames)
        for name in ("x_series", "y_series", "d_series"):
            if len(getattr(self, name)) != n:
                raise InvalidInputError(f"{name} length differs from frames")
        if n == 0:
            raise InvalidInputError("empty approach region")

    def __len__(self):
        return len(self.frames)

    @property
    def min_index(self):
        return int(np.searchsorted(self.frames, self.min_frame))

    def samples(self):
        """``(x, D, y)`` columns ready for :func:`pedswerve.swerve.fit_quadratic`."""
        return np.column_stack([self.x_series, self.d_series, self.y_series])


@dataclass(frozen=True)
class PreprocessConfig:
    """Preprocessing knobs.

    A window of ``w`` frames spans ``w // 2`` frames before the centre and
    ``w - 1 - w // 2`` after, so odd windows are exactly centred and an even
    window of 30 covers 15 before and 14 after.
    """

    cm_per_pixel: float = 1.0
    smooth_window: int = 30
    approach_half_window: int = 30
    perpendicular_tol_deg: float = 20.0

    def __post_init__(self):
        if not self.cm_per_pixel > 0 or not math.isfinite(self.cm_per_pixel):
            raise InvalidConfigError(f"cm_per_pixel must be positive, got {self.cm_per_pixel}")
        if int(self.smooth_window) < 1:
            raise InvalidConfigError(f"smooth_window must be >= 1, got {self.smooth_window}")
        if int(self.approach_half_window) < 1:
            raise InvalidConfigError(
                f"approach_half_window must be >= 1, got {self.approach_half_window}"
            )

    @classmethod
    def for_fps(cls, fps, cm_per_pixel=1.0, **kw):
        """Rate-dependent defaults: one second either side, one-second smoothing."""
        sec = max(1, int(round(fps)))
        kw.setdefault("smooth_window", sec)
        kw.setdefault("approach_half_window", sec)
        return cls(cm_per_pixel=cm_per_pixel, **kw)


def scale_to_cm(traj, cfg):
    if not cfg.cm_per_pixel > 0:
        raise InvalidConfigError(f"cm_per_pixel must be positive, got {cfg.cm_per_pixel}")
    return replace(traj, pos=traj.pos * cfg.cm_per_pixel)


def _window_means(values, window):
    n = len(values)
    before = window // 2
    after = window - 1 - before
    idx = np.arange(n)
    reach = np.minimum(idx, n - 1 - idx)
    lo = idx - np.minimum(before, reach)
    hi = idx + np.minimum(after, reach)
    csum = np.vstack([np.zeros((1,) + values.shape[1:]), np.cumsum(values, axis=0)])
    counts = (hi - lo + 1).reshape((-1,) + (1,) * (values.ndim - 1))
    return (csum[hi + 1] - csum[lo]) / counts


def smooth_moving_average(traj, window):
    """Centred moving average whose window shrinks symmetrically at the ends."""
    window = int(window)
    if window < 1:
        raise InvalidConfigError(f"smoothing window must be >= 1, got {window}")
    pos = _window_means(traj.pos, window)
    # Constant runs must survive exactly; the cumulative-sum difference can drift by an ulp.
    same = np.all(traj.pos == traj.pos[0], axis=0)
    pos[:, same] = traj.pos[0, same]
    return replace(traj, pos=pos)


def _rotation(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def approach_angle_deg(enc):
    """Angle between the two pedestrians' net directions, in [0, 180]."""
    a, b = enc.swerver.net_displacement(), enc.other.net_displacement()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateTrajectoryError("zero net displacement")
    cos = float(np.clip(a @ b / (na * nb), -1.0, 1.0))
    return math.degrees(math.acos(cos))


def is_roughly_perpendicular(enc, tol_deg=20.0):
    return abs(approach_angle_deg(enc) - 90.0) <= tol_deg


def rotate_axis_align(enc):
    """Rotate about the origin so the swerver's net displacement points along +x.

    The other pedestrian then moves roughly along the y axis for a
    perpendicular crossing. Pure rotation, so all distances are preserved.
    """
    for traj in (enc.swerver, enc.other):
        if not np.any(traj.net_displacement()):
            raise DegenerateTrajectoryError(f"pedestrian {traj.ped_id} has zero net displacement")
    dx, dy = enc.swerver.net_displacement()
    rot = _rotation(-math.atan2(dy, dx))
    return Encounter(
        replace(enc.swerver, pos=enc.swerver.pos @ rot.T),
        replace(enc.other, pos=enc.other.pos @ rot.T),
        enc.overlap,
    )


def distance_series(enc):
    a, b = enc.positions()
    return np.hypot(*(a - b).T)


def min_approach_point(enc):
    """Frame and distance of closest approach over the overlap (earliest on ties)."""
    if len(enc.overlap) == 0:
        raise NoOverlapError("empty overlap")
    d = distance_series(enc)
    i = int(np.argmin(d))
    return int(enc.overlap[i]), float(d[i])


def extract_approach_region(enc, cfg):
    min_frame, _ = min_approach_point(enc)
    half = int(cfg.approach_half_window)
    ov = enc.overlap
    frames = ov[(ov >= min_frame - half) & (ov <= min_frame + half)]
    sw = enc.swerver.at_frames(frames)
    ot = enc.other.at_frames(frames)
    x0 = float(sw[0, 0])
    other = ot - np.array([x0, 0.0])
    x = sw[:, 0] - x0
    y = sw[:, 1].copy()
    d = np.hypot(*(sw - ot).T)
    return ApproachRegion(
        frames=frames,
        x_series=x,
        y_series=y,
        d_series=d,
        min_frame=min_frame,
        other_xy=other,
        x_origin=x0,
        fps=enc.swerver.fps,
    )


def _deviation_rms(pos):
    chord = pos[-1] - pos[0]
    length = np.linalg.norm(chord)
    if length == 0:
        return 0.0
    normal = np.array([-chord[1], chord[0]]) / length
    dev = (pos - pos[0]) @ normal
    return float(np.sqrt(np.mean((dev - dev.mean()) ** 2)))


def identify_swerver(enc, cfg):
    """Order the pair so the pedestrian deviating more inside the approach window swerves."""
    min_frame, _ = min_approach_point(enc)
    half = int(cfg.approach_half_window)
    ov = enc.overlap
    frames = ov[(ov >= min_frame - half) & (ov <= min_frame + half)]
    if len(frames) < 2:
        return enc
    a = _deviation_rms(enc.swerver.at_frames(frames))
    b = _deviation_rms(enc.other.at_frames(frames))
    return enc.swapped() if b > a else enc


def preprocess_encounter(enc, cfg, infer_swerver=False):
    """Scale, smooth, rotate and extract, in that order."""
    sw = smooth_moving_average(scale_to_cm(enc.swerver, cfg), cfg.smooth_window)
    ot = smooth_moving_average(scale_to_cm(enc.other, cfg), cfg.smooth_window)
    enc = Encounter(sw, ot, enc.overlap)
    if infer_swerver:
        enc = identify_swerver(enc, cfg)
    enc = rotate_axis_align(enc)
    return enc, extract_approach_region(enc, cfg)


def compute_mpd(pos_a, vel_a, pos_b, vel_b):
    """Closest future distance if both keep their current velocity."""
    p = np.asarray(pos_a, dtype=float) - np.asarray(pos_b, dtype=float)
    v = np.asarray(vel_a, dtype=float) - np.asarray(vel_b, dtype=float)
    vv = float(v @ v)
    t = 0.0 if vv == 0.0 else max(0.0, -float(p @ v) / vv)
    return float(np.linalg.norm(p + t * v))
