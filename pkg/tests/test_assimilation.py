import math

import numpy as np
import pytest
from conftest import QUAD_A, QUAD_A_GEOMETRY
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from oracles import kalman_filter

from pedswerve.assimilation import (
    DynamicUpdateConfig,
    ObservationStream,
    PredictionRun,
    StateEstimate,
    UkfConfig,
    compare_predictors,
    dynamic_update,
    initial_estimate,
    run_metrics,
    run_predictor,
    sigma_points,
    summarize_by_method,
    training_params,
    ukf_init,
    ukf_step,
    ukf_weights,
)
from pedswerve.errors import CausalityError, InvalidConfigError, InvalidInputError, InvalidStateError
from pedswerve.swerve import QuadraticSwerveParams, aggregate_params, eval_quadratic, fit_region, predict_trajectory
from pedswerve.synthgen import ScenarioSpec, generate_encounter
from pedswerve.trajectory import ApproachRegion, PreprocessConfig, extract_approach_region

# y depends on x only, so the closed-loop extrapolation is exact
X_ONLY = QuadraticSwerveParams(1.0, 0.05, 0.0, -0.001, 0.0, 0.0)
CFG = PreprocessConfig(approach_half_window=30)


def region(model, seed=0, noise=0.0, **geom):
    geom = geom or QUAD_A_GEOMETRY
    enc, _ = generate_encounter(ScenarioSpec(planted_model=model, noise_sigma=noise, seed=seed, **geom))
    return extract_approach_region(enc, CFG)


def toy_region(y_obs):
    n = len(y_obs)
    return ApproachRegion(np.arange(n), np.linspace(0, 60, n), np.asarray(y_obs, float), np.full(n, 50.0), 0,
                          other_xy=np.column_stack([np.full(n, 30.0), np.full(n, 40.0)]))


# -- configs --------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(InvalidConfigError):
        DynamicUpdateConfig(correction_interval=0)
    with pytest.raises(InvalidConfigError):
        DynamicUpdateConfig(bootstrap_frames=0)
    with pytest.raises(InvalidConfigError):
        UkfConfig(alpha=0.0)
    with pytest.raises(InvalidConfigError):
        UkfConfig(alpha=1.5)
    with pytest.raises(InvalidConfigError):
        UkfConfig(measurement_noise_var=0.0)
    with pytest.raises(InvalidConfigError):
        UkfConfig(dt=0.0)


def test_correction_frames():
    assert DynamicUpdateConfig().correction_frames(31).tolist() == [10, 15, 20, 25, 30]


# -- initial estimate --------------------------------------------------------------------

def test_initial_estimate_zero_training():
    r = region(QUAD_A)
    y = initial_estimate(QuadraticSwerveParams(0, 0, 0, 0, 0, 0), r.x_series, r.other_xy, d0=r.d_series[0])
    assert np.all(y == 0)


def test_initial_estimate_self_consistency():
    r = region(X_ONLY)
    p, diag = fit_region(r)
    fitted = eval_quadratic(p, r.x_series, r.d_series)
    np.testing.assert_allclose(r.y_series - fitted, 0, atol=1e-9)
    assert diag.rmse < 1e-9
    y_e = initial_estimate(p, r.x_series, r.other_xy, d0=r.d_series[0])
    np.testing.assert_allclose(y_e, r.y_series, atol=1e-6)


def test_initial_estimate_pooled_training_matches_planted():
    pool = [region(QUAD_A, seed=s, swerver_speed=20.0, other_speed=10.0, crossing_offset=o)
            for s, o in enumerate((0.0, 0.0, 0.0, 0.0, 0.0))]
    pool[1] = region(QUAD_A, swerver_speed=10.0, other_speed=10.0, crossing_offset=0.0)
    pool[2] = region(QUAD_A, swerver_speed=10.0, other_speed=5.0, crossing_offset=0.0)
    test = region(QUAD_A)
    want = predict_trajectory(QUAD_A, test.x_series, test.other_xy, test.d_series[0])
    for pooling in ("pooled", "average"):
        got = initial_estimate(pool, test.x_series, test.other_xy, d0=test.d_series[0], pooling=pooling)
        np.testing.assert_allclose(got, want, atol=1e-6)


def test_initial_estimate_errors():
    r = region(QUAD_A)
    with pytest.raises(InvalidInputError):
        initial_estimate([], r.x_series, r.other_xy, d0=1.0)
    with pytest.raises(InvalidInputError):
        initial_estimate(QUAD_A, r.x_series, r.other_xy, n=0, d0=1.0)
    with pytest.raises(InvalidConfigError):
        training_params([r], pooling="median")


def test_training_from_distribution():
    d = aggregate_params([QUAD_A, X_ONLY])
    np.testing.assert_allclose(training_params(d).as_array(), (QUAD_A.as_array() + X_ONLY.as_array()) / 2)


# -- dynamic update ----------------------------------------------------------------------

def test_dynamic_update_examples():
    cfg = DynamicUpdateConfig()
    r = np.random.default_rng(0).normal(size=40)
    np.testing.assert_array_equal(dynamic_update(r, r, cfg), r)
    y_e = np.arange(30.0)
    y_obs = np.full(30, np.nan)
    y_obs[10] = 2.0
    y_p = dynamic_update(y_e, y_obs, cfg)
    np.testing.assert_array_equal(y_p[11:15], np.arange(11.0, 15.0) - 8)
    np.testing.assert_array_equal(y_p[:10], y_e[:10])


def test_dynamic_update_missing_correction_uses_earlier_observation():
    y_e = np.zeros(20)
    y_obs = np.arange(20.0)
    y_obs[15] = np.nan
    y_p = dynamic_update(y_e, y_obs, DynamicUpdateConfig())
    assert np.all(y_p[15:20] == 14.0)


def test_dynamic_update_length_mismatch():
    with pytest.raises(InvalidInputError):
        dynamic_update(np.zeros(3), np.zeros(4), DynamicUpdateConfig())


series = arrays(np.float64, st.integers(1, 80), elements=st.floats(-1e3, 1e3))


@given(series, st.integers(1, 9), st.integers(1, 15), st.floats(-100, 100))
def test_dynamic_update_properties(y_e, k, b, c):
    cfg = DynamicUpdateConfig(correction_interval=k, bootstrap_frames=b)
    y_obs = y_e[::-1] * 0.5 + 3.0
    y_p = dynamic_update(y_e, y_obs, cfg)
    marks = cfg.correction_frames(len(y_e))
    np.testing.assert_array_equal(y_p[marks], y_obs[marks])
    first = marks[0] if len(marks) else len(y_e)
    np.testing.assert_array_equal(y_p[:first], y_e[:first])
    # shifting the estimate leaves corrected frames alone; shifting the observations moves them
    np.testing.assert_allclose(dynamic_update(y_e + c, y_obs, cfg)[first:], y_p[first:], atol=1e-9)
    np.testing.assert_allclose(dynamic_update(y_e, y_obs + c, cfg)[first:], y_p[first:] + c, atol=1e-9)


# -- UKF -----------------------------------------------------------------------------------

def test_sigma_points_example():
    pts = sigma_points(np.zeros(2), np.eye(2), UkfConfig(alpha=1.0, kappa=0.0))
    s = math.sqrt(2)
    np.testing.assert_allclose(pts, [[0, 0], [s, 0], [0, s], [-s, 0], [0, -s]], atol=1e-15)


@pytest.mark.parametrize("alpha,kappa", [(1e-3, 0.0), (0.5, 1.0), (1.0, 0.0)])
def test_weights_sum_to_one(alpha, kappa):
    _, wm, wc = ukf_weights(UkfConfig(alpha=alpha, kappa=kappa))
    assert wm.sum() == pytest.approx(1.0, abs=1e-9)
    assert len(wm) == len(wc) == 5


def test_ukf_init():
    est = ukf_init(4.0, UkfConfig(measurement_noise_var=2.0))
    np.testing.assert_array_equal(est.mean, [4.0, 0.0])
    np.testing.assert_array_equal(est.cov, np.diag([2.0, 2500.0]))


def test_ukf_noiseless_linear_truth():
    cfg = UkfConfig(process_noise_spectral=0.0, measurement_noise_var=1e-12, alpha=0.5)
    truth = 3.0 + 20.0 * cfg.dt * np.arange(10)
    est = ukf_init(truth[0], cfg)
    for z in truth[1:3]:
        est = ukf_step(est, z, cfg)
    assert est.mean[0] == pytest.approx(truth[2], abs=1e-6)
    assert est.mean[1] == pytest.approx(20.0, abs=1e-3)
    for z in truth[3:]:
        est = ukf_step(est, z, cfg)
        assert est.mean[0] == pytest.approx(z, abs=1e-6)


def test_ukf_matches_kalman_filter():
    cfg = UkfConfig(process_noise_spectral=50.0, measurement_noise_var=4.0)
    r = np.random.default_rng(3)
    F, Q = cfg.transition(), cfg.process_cov()
    x, zs = np.array([0.0, 30.0]), []
    for _ in range(100):
        x = F @ x + r.multivariate_normal([0, 0], Q)
        zs.append(x[0] + r.normal(0, 2))
    est = ukf_init(zs[0], cfg)
    km, kc = kalman_filter(zs[1:], F, Q, np.array([[1.0, 0.0]]), np.array([[4.0]]), est.mean, est.cov)
    for z, m, c in zip(zs[1:], km, kc):
        est = ukf_step(est, z, cfg)
        np.testing.assert_allclose(est.mean, m, rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(est.cov, c, rtol=1e-6)


def test_ukf_rejects_bad_state():
    cfg = UkfConfig()
    with pytest.raises(InvalidStateError):
        ukf_step(StateEstimate([0, 0], [[1, 0], [0, -1]]), 0.0, cfg)
    with pytest.raises(InvalidStateError):
        ukf_step(StateEstimate([0, 0], [[1, 0.5], [0, 1]]), 0.0, cfg)
    with pytest.raises(InvalidInputError):
        ukf_step(ukf_init(0.0, cfg), math.nan, cfg)


def test_ukf_covariance_stays_psd():
    r = np.random.default_rng(11)
    for trial in range(20):
        cfg = UkfConfig(alpha=float(r.uniform(1e-3, 1)), process_noise_spectral=float(10 ** r.uniform(-2, 5)),
                        measurement_noise_var=float(10 ** r.uniform(-4, 2)))
        est = ukf_init(0.0, cfg)
        for z in r.normal(0, 10 ** r.uniform(-1, 3), 500):
            est = ukf_step(est, float(z), cfg)
            np.testing.assert_array_equal(est.cov, est.cov.T)
            assert np.linalg.eigvalsh(est.cov)[0] >= -1e-9


# -- replay -----------------------------------------------------------------------------------

def test_observation_stream_refuses_lookahead():
    s = ObservationStream([1.0, 2.0])
    with pytest.raises(CausalityError):
        s.get(0)
    s.reveal_next()
    assert s.get(0) == 1.0
    with pytest.raises(CausalityError):
        s.get(1)


@pytest.mark.parametrize("method", ["dynamic", "ukf"])
def test_replay_is_causal(method):
    base = region(QUAD_A, noise=1.0, seed=5)
    run = run_predictor(base, method, training=QUAD_A)
    r = np.random.default_rng(0)
    for t in (3, 12, 17, 40):
        y = base.y_series.copy()
        y[t:] += r.normal(0, 50, len(y) - t)
        altered = ApproachRegion(base.frames, base.x_series, y, base.d_series, base.min_frame, base.other_xy,
                                 base.x_origin, base.fps)
        other = run_predictor(altered, method, training=QUAD_A)
        np.testing.assert_array_equal(other.y_pred[: t + 1], run.y_pred[: t + 1])


def test_replay_noiseless_matching_model():
    r = region(X_ONLY)
    run = run_predictor(r, "dynamic", training=X_ONLY)
    assert run.rmse < 1e-6


def test_replay_constant_observations():
    c = 7.5
    r = toy_region(np.full(40, c))
    run = run_predictor(r, "dynamic", training=QuadraticSwerveParams(0, 0, 0, 0, 0, 0))
    assert np.all(run.y_pred[:10] == 0)
    assert np.all(run.errors[10:] == 0)
    m = run_metrics(run)
    assert m["post_rmse_cm"] == 0 and m["bootstrap_rmse_cm"] == pytest.approx(c)


def test_replay_uses_base_params_and_validates():
    r = toy_region(np.zeros(20))
    run = run_predictor(r, "dynamic", DynamicUpdateConfig(base_params=X_ONLY))
    assert run.method == "dynamic" and len(run.errors) == 20
    with pytest.raises(InvalidConfigError):
        run_predictor(r, "kalman")
    with pytest.raises(InvalidInputError):
        run_predictor(r, "dynamic")


def test_ukf_replay_frame_zero_is_first_observation():
    r = toy_region(np.linspace(1, 5, 20))
    run = run_predictor(r, "ukf")
    assert run.y_pred[0] == 1.0


@pytest.mark.slow
def test_monte_carlo_both_methods():
    train = [region(QUAD_A, seed=1000 + s, noise=1.0) for s in range(5)]
    for seed in range(50):
        r = region(QUAD_A, seed=seed, noise=1.0)
        for method in ("dynamic", "ukf"):
            m = run_metrics(run_predictor(r, method, training=train))
            assert m["post_rmse_cm"] <= 3.0, (seed, method, m)


# -- metrics ----------------------------------------------------------------------------------

def _run(err, method="m"):
    err = np.asarray(err, float)
    return PredictionRun(np.arange(len(err)), err, np.zeros(len(err)), method, 1)


def test_compare_predictors_examples():
    rows = compare_predictors([_run([0, 0, 0])])
    assert rows[0]["rmse_cm"] == 0
    rows = compare_predictors([_run([1, 1, 1], "a"), _run([3, 3, 3], "b")])
    assert [r["rmse_cm"] for r in rows] == [1.0, 3.0]
    assert set(rows[0]) == {"method", "rmse_cm", "max_err_cm", "bootstrap_rmse_cm", "post_rmse_cm"}
    a, b = compare_predictors([_run([1, 2, 4]), _run([1, 2, 4])])
    assert a == b
    with pytest.raises(InvalidInputError):
        compare_predictors([])


def test_summarize_by_method():
    rows = compare_predictors([_run([1, 1], "a"), _run([3, 3], "a"), _run([2, 2], "b")])
    s = summarize_by_method(rows)
    assert s["a"]["rmse_cm"] == 2.0 and s["b"]["max_err_cm"] == 2.0


def test_prediction_run_validation():
    with pytest.raises(InvalidInputError):
        PredictionRun(np.arange(3), np.zeros(3), np.zeros(2), "x")
