"""File formats: trajectory and region CSVs, config and result JSON.

Every float is written with 9 significant digits and ``.`` as the decimal
separator, independent of locale. Readers report the file and line number of
the first bad row.
"""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from .errors import GroupingError, InputError, InvalidConfigError
from .trajectory import ApproachRegion, Encounter, PreprocessConfig, Trajectory

TRAJECTORY_COLUMNS = ("ped_id", "frame", "x", "y")
REGION_COLUMNS = ("frame", "x_cm", "y_cm", "d_cm")
PREDICTION_COLUMNS = ("frame", "y_obs", "y_pred", "abs_err")
TRUTH_COLUMNS = ("frame", "y_true")
PAIR_COLUMNS = ("swerver_id", "other_id")
CONFIG_REQUIRED = ("cm_per_pixel", "fps")
CONFIG_OPTIONAL = ("smooth_window", "approach_half_window", "perpendicular_tol_deg")


def fmt(v):
    """9-significant-digit text for a number; integers stay integers."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".9g")


def round9(obj):
    """Recursively round floats to 9 significant digits; NaN/inf become ``None``."""
    if isinstance(obj, dict):
        return {k: round9(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round9(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return round9(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(format(v, ".9g")) if math.isfinite(v) else None
    return obj


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(round9(obj), fh, indent=2, sort_keys=False)
        fh.write("\n")


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if not text.strip():
        raise InputError(f"empty input: {path}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def _read_table(path, required):
    """Rows of a headed CSV as ``(line_number, {column: text})``."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            lines = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    numbered = [(i + 1, row) for i, row in enumerate(lines) if any(c.strip() for c in row)]
    if not numbered:
        raise InputError(f"empty input: {path}")
    line, header = numbered[0]
    header = [h.strip() for h in header]
    missing = [c for c in required if c not in header]
    if missing:
        raise InputError(f"{path}:{line}: header must name columns {', '.join(required)} "
                         f"(missing {', '.join(missing)})")
    out = []
    for line, row in numbered[1:]:
        if len(row) != len(header):
            raise InputError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
        out.append((line, {h: v.strip() for h, v in zip(header, row)}))
    return out


def _float(path, line, name, text):
    try:
        v = float(text)
    except ValueError:
        raise InputError(f"{path}:{line}: field {name!r} is not a number: {text!r}") from None
    if not math.isfinite(v):
        raise InputError(f"{path}:{line}: field {name!r} is not finite: {text!r}")
    return v


def _frame(path, line, text):
    v = _float(path, line, "frame", text)
    if v != int(v) or v < 0:
        raise InputError(f"{path}:{line}: frame must be a non-negative integer, got {text!r}")
    return int(v)


# -- trajectories ------------------------------------------------------------------

def read_trajectories(path, fps=30.0):
    """Trajectories keyed by pedestrian id, in order of first appearance."""
    rows = _read_table(path, TRAJECTORY_COLUMNS)
    if not rows:
        raise InputError(f"empty input: {path} has a header but no rows")
    per_ped = {}
    for line, r in rows:
        pid = r["ped_id"]
        if not pid:
            raise InputError(f"{path}:{line}: empty ped_id")
        frame = _frame(path, line, r["frame"])
        x = _float(path, line, "x", r["x"])
        y = _float(path, line, "y", r["y"])
        seen = per_ped.setdefault(pid, {})
        if frame in seen:
            raise InputError(f"{path}:{line}: duplicate frame {frame} for pedestrian {pid}")
        seen[frame] = (x, y)
    out = {}
    for pid, samples in per_ped.items():
        if len(samples) < 2:
            raise InputError(f"{path}: pedestrian {pid} has fewer than 2 samples")
        frames = sorted(samples)
        out[pid] = Trajectory(pid, frames, [samples[f] for f in frames], fps)
    return out


def write_trajectories(path, trajectories):
    rows = []
    for t in trajectories:
        for f, (x, y) in zip(t.frames, t.pos):
            rows.append((t.ped_id, int(f), x, y))
    write_rows(path, TRAJECTORY_COLUMNS, rows)


def read_pairs(path):
    rows = _read_table(path, PAIR_COLUMNS)
    if not rows:
        raise InputError(f"empty input: {path} lists no encounters")
    pairs = []
    for line, r in rows:
        s, o = r["swerver_id"], r["other_id"]
        if not s or not o:
            raise InputError(f"{path}:{line}: empty pedestrian id")
        if s == o:
            raise GroupingError(f"{path}:{line}: swerver and other are both {s}")
        pairs.append((s, o))
    return pairs


def write_pairs(path, pairs):
    write_rows(path, PAIR_COLUMNS, pairs)


def group_encounters(trajectories, pairs=None):
    """Build encounters from a pairing list, or from a file holding exactly two pedestrians.

    Without a pairing list the first pedestrian in the file is taken as the swerver.
    """
    ids = list(trajectories)
    if pairs is None:
        if len(ids) == 1:
            raise GroupingError(f"only one pedestrian ({ids[0]}) in the input; an encounter needs two")
        if len(ids) != 2:
            raise GroupingError(f"{len(ids)} pedestrians in the input; supply an encounters file to pair them")
        pairs = [(ids[0], ids[1])]
    out = []
    for s, o in pairs:
        for pid in (s, o):
            if pid not in trajectories:
                raise GroupingError(f"pedestrian {pid} from the pairing list is not in the trajectory file")
        out.append(Encounter(trajectories[s], trajectories[o]))
    return out


# -- config --------------------------------------------------------------------------

def read_config(path):
    """Validated config dict with ``cm_per_pixel`` and ``fps`` plus optional knobs."""
    obj = read_json(path)
    if not isinstance(obj, dict):
        raise InputError(f"{path}: config must be a JSON object")
    for name in CONFIG_REQUIRED:
        if name not in obj:
            raise InputError(f"{path}: config is missing required field {name!r}")
    cfg = {}
    for name in CONFIG_REQUIRED + CONFIG_OPTIONAL:
        if name in obj:
            v = obj[name]
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise InputError(f"{path}: config field {name!r} must be a number")
            cfg[name] = float(v)
    if not (cfg["fps"] > 0 and math.isfinite(cfg["fps"])):
        raise InvalidConfigError(f"fps must be positive, got {cfg['fps']}")
    return cfg


def preprocess_config(cfg, **overrides):
    """:class:`PreprocessConfig` from a config dict; ``None`` overrides are ignored."""
    kw = {k: cfg[k] for k in CONFIG_OPTIONAL if k in cfg}
    kw.update({k: v for k, v in overrides.items() if v is not None})
    for k in ("smooth_window", "approach_half_window"):
        if k in kw:
            if kw[k] != int(kw[k]):
                raise InvalidConfigError(f"{k} must be an integer, got {kw[k]}")
            kw[k] = int(kw[k])
    return PreprocessConfig.for_fps(cfg["fps"], cm_per_pixel=cfg["cm_per_pixel"], **kw)


# -- approach regions ------------------------------------------------------------------

def _meta_path(path):
    return Path(path).with_suffix(".json")


def write_region(path, region, **extra):
    """Region CSV plus a sidecar JSON (same stem) with the other pedestrian's path."""
    write_rows(path, REGION_COLUMNS,
               zip((int(f) for f in region.frames), region.x_series, region.y_series, region.d_series))
    meta = dict(extra)
    meta.update({
        "min_frame": int(region.min_frame),
        "fps": region.fps,
        "x_origin_cm": region.x_origin,
        "other_xy_cm": None if region.other_xy is None else np.asarray(region.other_xy).tolist(),
    })
    write_json(_meta_path(path), meta)


def read_region(path, require_other=False):
    rows = _read_table(path, REGION_COLUMNS)
    if not rows:
        raise InputError(f"empty input: {path} has a header but no rows")
    data = np.array([[_frame(path, ln, r["frame"])] + [_float(path, ln, c, r[c]) for c in REGION_COLUMNS[1:]]
                     for ln, r in rows])
    frames = data[:, 0].astype(np.int64)
    if np.any(np.diff(frames) <= 0):
        raise InputError(f"{path}: frames must be strictly increasing")
    meta_file = _meta_path(path)
    meta = read_json(meta_file) if os.path.exists(meta_file) else {}
    other = meta.get("other_xy_cm")
    if other is not None:
        other = np.asarray(other, dtype=float).reshape(-1, 2)
        if len(other) != len(frames):
            raise InputError(f"{meta_file}: other_xy_cm has {len(other)} rows, region has {len(frames)}")
    elif require_other:
        raise InputError(f"{path}: the other pedestrian's path is needed; sidecar {meta_file} is missing it")
    d = data[:, 3]
    min_frame = int(meta.get("min_frame", frames[int(np.argmin(d))]))
    return ApproachRegion(frames, data[:, 1], data[:, 2], d, min_frame, other,
                          float(meta.get("x_origin_cm", 0.0)), float(meta.get("fps", 30.0)))


def read_xy(path, x_col=None, y_col=None):
    """Two numeric columns from a CSV; defaults try ``x,y`` then ``x_cm,y_cm``."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            head = next((r for r in csv.reader(fh) if any(c.strip() for c in r)), None)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    if head is None:
        raise InputError(f"empty input: {path}")
    head = [h.strip() for h in head]
    if x_col is None or y_col is None:
        for cand in (("x", "y"), ("x_cm", "y_cm")):
            if all(c in head for c in cand):
                x_col, y_col = x_col or cand[0], y_col or cand[1]
                break
        else:
            raise InputError(f"{path}: name the columns to fit (no x,y or x_cm,y_cm header)")
    rows = _read_table(path, (x_col, y_col))
    if not rows:
        raise InputError(f"empty input: {path} has a header but no rows")
    x = np.array([_float(path, ln, x_col, r[x_col]) for ln, r in rows])
    y = np.array([_float(path, ln, y_col, r[y_col]) for ln, r in rows])
    return x, y


def write_prediction(path, run):
    write_rows(path, PREDICTION_COLUMNS,
               zip((int(f) for f in run.frames), run.y_obs, run.y_pred, run.errors))


def write_truth(path, frames, y_true):
    write_rows(path, TRUTH_COLUMNS, zip((int(f) for f in frames), y_true))
