"""Batch command line: ``pedswerve <subcommand> ...``.

Exit codes: 0 success, 1 domain error, 2 input error, 64 usage error.
Every output directory receives ``manifest.json``; ``pedswerve --replay
DIR/manifest.json`` runs the recorded command again.
"""

from __future__ import annotations

import argparse
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__, io
from .assimilation import (
    METHODS,
    DynamicUpdateConfig,
    PredictionRun,
    UkfConfig,
    run_metrics,
    run_predictor,
    summarize_by_method,
    training_params,
)
from .errors import InputError, PedSwerveError
from .swerve import (
    ParamDistribution,
    QuadraticSwerveParams,
    aggregate_params,
    distribution_from_json,
    distribution_to_json,
    fit_quadratic,
    fit_region,
    params_from_json,
    params_to_json,
    predict_trajectory,
)
from .symreg import SymRegConfig, fit_sinusoid, format_expr, front_to_json, prune_insignificant_terms, run_search
from .symreg.sinusoid import SinusoidParams
from .synthgen import ScenarioSpec, generate_encounter, perturb_quadratic
from .trajectory import approach_angle_deg, min_approach_point, preprocess_encounter

EXIT_OK, EXIT_DOMAIN, EXIT_INPUT, EXIT_USAGE = 0, 1, 2, 64
MANIFEST = "manifest.json"

PRESETS = {
    "quad-a": ("quadratic", (-5.21, 0.172, -0.036, -0.0011, 0.009, 0.0002)),
    "quad-b": ("quadratic", (319.9, -9.82, 0.031, 0.075, -0.076, 0.0003)),
    "sine-a": ("sinusoid", (-0.335, 0.046, -4.137, -0.968)),
    "sine-b": ("sinusoid", (-0.371, -0.078, -9.72, 1.456)),
}


@dataclass
class RunManifest:
    subcommand: str
    argv: list
    inputs: list = field(default_factory=list)
    config: str | None = None
    output_dir: str = ""
    seed: int | None = None
    tool: str = "pedswerve"
    version: str = __version__

    def write(self, out_dir):
        io.write_json(os.path.join(out_dir, MANIFEST), asdict(self))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- argument types ---------------------------------------------------------------

def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (math.isfinite(v) and v >= 0):
        raise argparse.ArgumentTypeError(f"must be a finite number >= 0, got {text!r}")
    return v


def _positive_float(text):
    v = _nonneg_float(text)
    if v == 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return v


def _float_list(text):
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _op_list(text):
    ops = tuple(t.strip() for t in text.split(",") if t.strip())
    bad = [op for op in ops if op not in ("sin", "cos")]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown unary operator(s): {', '.join(bad)}")
    return ops


def _safe(name):
    return re.sub(r"[^A-Za-z0-9._-]", "_", str(name))


def _stem(path):
    return os.path.splitext(os.path.basename(path))[0]


def _pool_map(fn, items, jobs):
    """Order-preserving map, in-process for one job."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as ex:
        return list(ex.map(fn, items))


def _load_training(path):
    obj = io.read_json(path)
    if isinstance(obj, dict) and "a" in obj:
        return params_from_json(obj)
    if isinstance(obj, dict) and "mean" in obj:
        return distribution_from_json(obj)
    raise InputError(f"{path}: expected a params JSON (field 'a') or a distribution JSON (field 'mean')")


# -- preprocess ---------------------------------------------------------------------

def _preprocess_job(job):
    enc, cfg, infer = job
    aligned, region = preprocess_encounter(enc, cfg, infer_swerver=infer)
    _, dmin = min_approach_point(aligned)
    return aligned.swerver.ped_id, aligned.other.ped_id, region, dmin, approach_angle_deg(aligned)


def _load_encounters(args):
    cfg_dict = io.read_config(args.config)
    cfg = io.preprocess_config(cfg_dict, smooth_window=args.smooth_window,
                               approach_half_window=args.half_window,
                               perpendicular_tol_deg=args.perp_tol)
    trajs = io.read_trajectories(args.trajectories, fps=cfg_dict["fps"])
    pairs = io.read_pairs(args.pairs) if args.pairs else None
    return cfg, io.group_encounters(trajs, pairs)


def _preprocess_all(args):
    cfg, encounters = _load_encounters(args)
    results = _pool_map(_preprocess_job, [(e, cfg, args.infer_swerver) for e in encounters], args.jobs)
    kept = []
    for res in results:
        s, o, region, dmin, angle = res
        if args.skip_oblique and abs(angle - 90.0) > cfg.perpendicular_tol_deg:
            print(f"{s} vs {o}: skipped, approach angle {angle:.1f} deg", file=sys.stderr)
            continue
        kept.append(res)
    return cfg, kept


def cmd_preprocess(args):
    _, results = _preprocess_all(args)
    rows = []
    for s, o, region, dmin, angle in results:
        name = f"region_{_safe(s)}_{_safe(o)}.csv"
        io.write_region(os.path.join(args.out, name), region, swerver_id=s, other_id=o,
                        min_distance_cm=dmin)
        rows.append((s, o, dmin, int(region.min_frame), len(region), angle))
        print(f"{s} vs {o}: min distance {io.fmt(dmin)} cm at frame {region.min_frame}, "
              f"{len(region)} frames")
    io.write_rows(os.path.join(args.out, "summary.csv"),
                  ("swerver_id", "other_id", "min_distance_cm", "min_frame", "n_frames", "approach_angle_deg"),
                  rows)


# -- fit / predict ----------------------------------------------------------------

def cmd_fit(args):
    fits, blocks = [], []
    for path in args.regions:
        region = io.read_region(path)
        p, diag = fit_region(region, standardize=not args.no_standardize)
        if not diag.reliable:
            print(f"warning: {path}: only {diag.n_points} samples, fit may be unreliable", file=sys.stderr)
        io.write_json(os.path.join(args.out, f"params_{_stem(path)}.json"), params_to_json(p, diag))
        fits.append(p)
        blocks.append(region.samples())
    pooled, diag = fit_quadratic(np.vstack(blocks), standardize=not args.no_standardize)
    io.write_json(os.path.join(args.out, "pooled.json"), params_to_json(pooled, diag))
    io.write_json(os.path.join(args.out, "distribution.json"), distribution_to_json(aggregate_params(fits)))


def cmd_predict(args):
    training = _load_training(args.params)
    p = training.mean_params() if isinstance(training, ParamDistribution) else training
    for path in args.regions:
        region = io.read_region(path, require_other=True)
        y = predict_trajectory(p, region.x_series, region.other_xy, region.d_series[0])
        run = _as_run(region, y, "model")
        io.write_prediction(os.path.join(args.out, f"prediction_{_stem(path)}.csv"), run)
        io.write_json(os.path.join(args.out, f"metrics_{_stem(path)}.json"), run_metrics(run))


def _as_run(region, y_pred, method):
    return PredictionRun(np.asarray(region.frames), np.asarray(y_pred), np.asarray(region.y_series), method, 0)


# -- assimilate / evaluate ------------------------------------------------------------

def _methods(args):
    return list(METHODS) if args.method == "both" else [args.method]


def _assimilate_job(job):
    region, methods, dyn, ukf_kw, training, pooling = job
    runs = []
    for m in methods:
        ukf = UkfConfig(dt=1.0 / region.fps, **ukf_kw) if m == "ukf" else None
        runs.append(run_predictor(region, m, dyn, ukf, training=training if m == "dynamic" else None,
                                  pooling=pooling))
    return runs


def _ukf_kwargs(args):
    return dict(alpha=args.alpha, beta=args.beta, kappa=args.kappa,
                process_noise_spectral=args.process_noise, measurement_noise_var=args.measurement_noise,
                initial_velocity_std=args.velocity_std)


def _training_from_args(args):
    if args.params:
        return _load_training(args.params)
    if args.train:
        regions = [io.read_region(p) for p in args.train]
        return training_params(regions, args.pooling)
    return None


def _write_runs(out_dir, label, runs):
    rows = []
    for run in runs:
        io.write_prediction(os.path.join(out_dir, f"{label}.{run.method}.csv"), run)
        metrics = run_metrics(run)
        io.write_json(os.path.join(out_dir, f"{label}.{run.method}.json"), metrics)
        rows.append(metrics)
    return rows


def cmd_assimilate(args):
    methods = _methods(args)
    training = _training_from_args(args) if "dynamic" in methods else None
    dyn = DynamicUpdateConfig(correction_interval=args.interval, bootstrap_frames=args.bootstrap)
    regions = [io.read_region(p, require_other="dynamic" in methods) for p in args.regions]
    jobs = [(r, methods, dyn, _ukf_kwargs(args), training, args.pooling) for r in regions]
    summary = []
    for path, runs in zip(args.regions, _pool_map(_assimilate_job, jobs, args.jobs)):
        for row in _write_runs(args.out, _stem(path), runs):
            summary.append(dict(region=_stem(path), **row))
    io.write_json(os.path.join(args.out, "summary.json"),
                  {"runs": summary, "by_method": summarize_by_method(summary_rows(summary))})


def summary_rows(rows):
    return [{k: v for k, v in r.items() if k not in ("region", "swerver_id", "other_id")} for r in rows]


def cmd_evaluate(args):
    methods = _methods(args)
    _, results = _preprocess_all(args)
    if not results:
        raise InputError("no encounters left to evaluate")
    regions = [r[2] for r in results]
    fixed = _load_training(args.params) if args.params else None
    if "dynamic" in methods and fixed is None and len(regions) < 2:
        raise InputError("leave-one-out training needs at least two encounters; pass --params instead")
    dyn = DynamicUpdateConfig(correction_interval=args.interval, bootstrap_frames=args.bootstrap)
    jobs = []
    for i, region in enumerate(regions):
        training = fixed
        if "dynamic" in methods and fixed is None:
            training = [r for j, r in enumerate(regions) if j != i]
        jobs.append((region, methods, dyn, _ukf_kwargs(args), training, args.pooling))
    pred_dir = os.path.join(args.out, "predictions")
    os.makedirs(pred_dir, exist_ok=True)
    table = []
    for (s, o, *_), runs in zip(results, _pool_map(_assimilate_job, jobs, args.jobs)):
        for row in _write_runs(pred_dir, f"{_safe(s)}_{_safe(o)}", runs):
            table.append(dict(swerver_id=s, other_id=o, **row))
    cols = ("swerver_id", "other_id", "method", "rmse_cm", "max_err_cm", "bootstrap_rmse_cm", "post_rmse_cm")
    io.write_rows(os.path.join(args.out, "metrics.csv"), cols, [[r[c] for c in cols] for r in table])
    by_method = summarize_by_method(summary_rows(table))
    io.write_json(os.path.join(args.out, "summary.json"), {"n_encounters": len(regions), "by_method": by_method})
    for m, vals in by_method.items():
        print(f"{m}: rmse {io.fmt(vals['rmse_cm'])} cm, post-bootstrap {io.fmt(vals['post_rmse_cm'])} cm")


# -- symreg ------------------------------------------------------------------------------

def cmd_symreg(args):
    x, y = io.read_xy(args.data, args.x_col, args.y_col)
    if args.x_unit == "m":
        x = x / 100.0
    cfg = SymRegConfig(population_size=args.population, n_islands=args.islands, generations=args.generations,
                       max_complexity=args.max_complexity, parsimony_init=args.parsimony,
                       p_crossover=args.p_crossover, tournament_size=args.tournament,
                       migration_interval=args.migration_interval, simplify_interval=args.simplify_interval,
                       constant_opt_iters=args.const_iters, unary_ops=args.unary_ops, seed=args.seed)
    front = run_search(x, y, cfg)
    io.write_json(os.path.join(args.out, "front.json"), front_to_json(front))
    best = min(front, key=lambda ind: (ind.mse, ind.complexity))
    cols = [best.expr(x)]
    header = ["x", "y", "y_best"]
    if args.prune_tol is not None:
        pruned = prune_insignificant_terms(best.expr, x, y, tol=args.prune_tol,
                                           rng=np.random.default_rng(args.seed))
        io.write_json(os.path.join(args.out, "pruned.json"),
                      {"expr": format_expr(pruned), "mse": float(np.mean((pruned(x) - y) ** 2)),
                       "complexity": pruned.complexity})
        cols.append(pruned(x))
        header.append("y_pruned")
    if args.sinusoid:
        sp = fit_sinusoid(x, y)
        io.write_json(os.path.join(args.out, "sinusoid.json"),
                      {"k": sp.k, "a": sp.a, "b": sp.b, "c": sp.c, "mse": float(np.mean((sp(x) - y) ** 2))})
        cols.append(sp(x))
        header.append("y_sinusoid")
    io.write_rows(os.path.join(args.out, "fit.csv"), header, zip(x, y, *cols))
    print(f"best: {format_expr(best.expr)} (mse {io.fmt(best.mse)}, complexity {best.complexity})")


# -- synth ---------------------------------------------------------------------------------

def _planted(args):
    kind, coeffs = args.model, args.coeffs
    if args.preset:
        kind, coeffs = PRESETS[args.preset]
    if kind == "none":
        return None
    if coeffs is None:
        raise InputError(f"model {kind!r} needs --coeffs or --preset")
    need = 6 if kind == "quadratic" else 4
    if len(coeffs) != need:
        raise InputError(f"model {kind!r} takes {need} coefficients, got {len(coeffs)}")
    return QuadraticSwerveParams.from_array(coeffs) if kind == "quadratic" else SinusoidParams(*coeffs)


def cmd_synth(args):
    base = _planted(args)
    rng = np.random.default_rng(args.seed)
    trajs, pairs, planted = [], [], []
    for i in range(args.count):
        model = base
        if isinstance(base, QuadraticSwerveParams) and args.perturb > 0:
            model = perturb_quadratic(base, args.perturb, rng)
        sid, oid = (str(2 * i + 1), str(2 * i + 2))
        spec = ScenarioSpec(swerver_speed=args.swerver_speed, other_speed=args.other_speed,
                            crossing_offset=args.offset, planted_model=model, noise_sigma=args.noise,
                            fps=args.fps, duration=args.duration, seed=args.seed + i,
                            approach_half_window=args.half_window, swerver_id=sid, other_id=oid)
        enc, y_true = generate_encounter(spec)
        trajs += [enc.swerver, enc.other]
        pairs.append((sid, oid))
        truth = "ground_truth.csv" if args.count == 1 else f"ground_truth_{sid}.csv"
        io.write_truth(os.path.join(args.out, truth), enc.swerver.frames, y_true)
        planted.append({"swerver_id": sid, "other_id": oid, "seed": spec.seed,
                        "model": None if model is None else type(model).__name__,
                        "coefficients": None if model is None else model.as_array()})
    io.write_trajectories(os.path.join(args.out, "trajectories.csv"), trajs)
    io.write_pairs(os.path.join(args.out, "encounters.csv"), pairs)
    io.write_json(os.path.join(args.out, "config.json"), {"cm_per_pixel": 1.0, "fps": args.fps})
    io.write_json(os.path.join(args.out, "planted.json"), planted)


# -- parser ----------------------------------------------------------------------------------

def _add_preprocess_opts(p):
    p.add_argument("trajectories", help="trajectory CSV (ped_id,frame,x,y)")
    p.add_argument("--config", required=True, help='JSON with "cm_per_pixel" and "fps"')
    p.add_argument("--pairs", help="encounters.csv (swerver_id,other_id); optional for two-pedestrian files")
    p.add_argument("--smooth-window", type=_positive_int, help="moving-average width in frames (default: fps)")
    p.add_argument("--half-window", type=_positive_int, help="approach half-window in frames (default: fps)")
    p.add_argument("--perp-tol", type=_nonneg_float, help="perpendicularity tolerance in degrees (default 20)")
    p.add_argument("--infer-swerver", action="store_true",
                   help="pick the swerver by deviation instead of trusting the pairing order")
    p.add_argument("--skip-oblique", action="store_true", help="drop encounters that are not roughly perpendicular")


def _add_predictor_opts(p):
    p.add_argument("--method", choices=list(METHODS) + ["both"], default="both")
    p.add_argument("--interval", type=_positive_int, default=5, help="frames between corrections")
    p.add_argument("--bootstrap", type=_positive_int, default=10, help="frames before the first correction")
    p.add_argument("--params", help="params or distribution JSON used for the initial estimate")
    p.add_argument("--pooling", choices=("pooled", "average"), default="pooled")
    d = UkfConfig()
    p.add_argument("--alpha", type=_positive_float, default=d.alpha)
    p.add_argument("--beta", type=_nonneg_float, default=d.beta)
    p.add_argument("--kappa", type=float, default=d.kappa)
    p.add_argument("--process-noise", type=_positive_float, default=d.process_noise_spectral,
                   help="white-acceleration spectral density (cm^2/s^3)")
    p.add_argument("--measurement-noise", type=_positive_float, default=d.measurement_noise_var,
                   help="measurement variance (cm^2)")
    p.add_argument("--velocity-std", type=_positive_float, default=d.initial_velocity_std,
                   help="initial velocity standard deviation (cm/s)")


def build_parser():
    parser = _Parser(prog="pedswerve", description="Pedestrian swerve modelling pipeline.")
    parser.add_argument("--version", action="version", version=f"pedswerve {__version__}")
    parser.add_argument("--replay", metavar="MANIFEST", help="re-run the command recorded in a manifest")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def common(p, seed=False, jobs=False):
        p.add_argument("--out", required=True, help="output directory")
        if seed:
            p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
        if jobs:
            p.add_argument("--jobs", type=_positive_int, default=1, help="parallel worker processes")

    p = sub.add_parser("preprocess", help="trajectories to approach-region CSVs")
    _add_preprocess_opts(p)
    common(p, jobs=True)

    p = sub.add_parser("fit", help="fit the quadratic swerve model to regions")
    p.add_argument("regions", nargs="+")
    p.add_argument("--no-standardize", action="store_true", help="fit on raw columns")
    common(p)

    p = sub.add_parser("predict", help="roll the swerve model forward over regions")
    p.add_argument("regions", nargs="+")
    p.add_argument("--params", required=True)
    common(p)

    p = sub.add_parser("assimilate", help="replay regions through the dynamic update and/or UKF")
    p.add_argument("regions", nargs="+")
    _add_predictor_opts(p)
    p.add_argument("--train", nargs="+", metavar="REGION", help="training regions for the initial estimate")
    common(p, jobs=True)

    p = sub.add_parser("symreg", help="symbolic regression of y on x")
    p.add_argument("data", help="CSV with x,y (or x_cm,y_cm) columns")
    p.add_argument("--x-col")
    p.add_argument("--y-col")
    p.add_argument("--x-unit", choices=("cm", "m"), default="cm", help="unit of x seen by the model")
    d = SymRegConfig()
    p.add_argument("--population", type=_positive_int, default=d.population_size)
    p.add_argument("--islands", type=_positive_int, default=d.n_islands)
    p.add_argument("--generations", type=_positive_int, default=d.generations)
    p.add_argument("--max-complexity", type=_positive_int, default=d.max_complexity)
    p.add_argument("--parsimony", type=_nonneg_float, default=d.parsimony_init,
                   help="initial per-node penalty as a fraction of var(y)")
    p.add_argument("--p-crossover", type=_nonneg_float, default=d.p_crossover)
    p.add_argument("--tournament", type=_positive_int, default=d.tournament_size)
    p.add_argument("--migration-interval", type=_positive_int, default=d.migration_interval)
    p.add_argument("--simplify-interval", type=_positive_int, default=d.simplify_interval)
    p.add_argument("--const-iters", type=_positive_int, default=d.constant_opt_iters)
    p.add_argument("--unary-ops", type=_op_list, default=d.unary_ops,
                   help="comma-separated subset of sin,cos; empty string for none")
    p.add_argument("--prune-tol", type=_positive_float, help="also prune the best member at this tolerance")
    p.add_argument("--sinusoid", action="store_true", help="also fit k*sin(a*x + b) + c")
    common(p, seed=True)

    p = sub.add_parser("synth", help="generate synthetic encounters")
    p.add_argument("--model", choices=("none", "quadratic", "sinusoid"), default="none")
    p.add_argument("--coeffs", type=_float_list, help="a0..a5 for quadratic, k,a,b,c for sinusoid")
    p.add_argument("--preset", choices=sorted(PRESETS), help="reference coefficient set")
    p.add_argument("--swerver-speed", type=_positive_float, default=100.0, help="cm/s")
    p.add_argument("--other-speed", type=_positive_float, default=100.0, help="cm/s")
    p.add_argument("--offset", type=_nonneg_float, default=50.0, help="unperturbed closest approach, cm")
    p.add_argument("--noise", type=_nonneg_float, default=0.0, help="Gaussian noise sigma, cm")
    p.add_argument("--fps", type=_positive_float, default=30.0)
    p.add_argument("--duration", type=_positive_float, default=4.0, help="seconds")
    p.add_argument("--half-window", type=_positive_int, help="approach half-window in frames (default: fps)")
    p.add_argument("--count", type=_positive_int, default=1, help="number of encounters")
    p.add_argument("--perturb", type=_nonneg_float, default=0.0,
                   help="relative per-encounter perturbation of quadratic coefficients")
    common(p, seed=True)

    p = sub.add_parser("evaluate", help="preprocess, predict and score every encounter")
    _add_preprocess_opts(p)
    _add_predictor_opts(p)
    common(p, jobs=True)
    return parser


def _manifest(args, argv):
    inputs = []
    for name in ("trajectories", "data", "pairs", "params"):
        v = getattr(args, name, None)
        if v:
            inputs.append(v)
    for name in ("regions", "train"):
        inputs += list(getattr(args, name, None) or [])
    return RunManifest(subcommand=args.command, argv=list(argv), inputs=inputs,
                       config=getattr(args, "config", None), output_dir=args.out,
                       seed=getattr(args, "seed", None))


COMMANDS = {
    "preprocess": cmd_preprocess,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "assimilate": cmd_assimilate,
    "symreg": cmd_symreg,
    "synth": cmd_synth,
    "evaluate": cmd_evaluate,
}


def _replay_argv(path):
    obj = io.read_json(path)
    argv = obj.get("argv") if isinstance(obj, dict) else None
    if not isinstance(argv, list) or not all(isinstance(a, str) for a in argv):
        raise InputError(f"{path}: manifest has no usable 'argv' list")
    return argv


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.replay:
            if args.command:
                parser.error("--replay takes no subcommand")
            argv = _replay_argv(args.replay)
            args = parser.parse_args(argv)
            if args.replay:
                parser.error("a manifest cannot itself request a replay")
        if not args.command:
            parser.error("a subcommand is required")
        if args.command == "assimilate" and args.method != "ukf" and not (args.params or args.train):
            parser.error("the dynamic method needs --params or --train")
        os.makedirs(args.out, exist_ok=True)
        COMMANDS[args.command](args)
        _manifest(args, argv).write(args.out)
    except InputError as exc:
        print(f"pedswerve: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PedSwerveError as exc:
        print(f"pedswerve: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"pedswerve: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
