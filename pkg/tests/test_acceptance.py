"""Acceptance gate: every release criterion, one pass/fail line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
Criteria 5's tracking thresholds are artifact-defined; the tighter
regression pins next to them were frozen from the first verified run of
the bundled scenario.
"""

import dataclasses
import json
import socket
import threading
import time

import numpy as np
import pytest

import cloudmhe as cm
from cloudmhe.cli import main
from cloudmhe.qp import QpProblem, solve_qp
from cloudmhe.v2c2v import ChannelConfig, FrameError, decode_frame, run_session
from test_qp import grid_box_argmin, random_psd_instance
from test_suspension import derivative_by_equations
from test_discretize import rk4_rollout

UNMEASURED = [0, 2, 4, 6, 8, 10, 12]


def report(criterion, passed, detail):
    print(f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")
    assert passed, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="module")
def scenario():
    config = cm.RunConfig.from_file(cm.paper_scenario_path())
    model = cm.build_model(config.params)
    discrete = cm.zoh(model, config.sim.ts)
    return config, model, discrete


@pytest.fixture(scope="module")
def scenario_run(scenario):
    config, model, discrete = scenario
    trajectory = cm.run_plant(model, discrete, config.road, config.sim)
    estimator = cm.MovingHorizonEstimator(discrete=discrete, c=model.c,
                                          config=config.mhe)
    estimates = estimator.filter(trajectory.measurements,
                                 us=trajectory.inputs, roads=trajectory.roads)
    return trajectory, estimates, estimator.records_


def test_c1_model_matches_equation_oracle(scenario):
    config, model, _ = scenario
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        x = rng.normal(0, 0.3, 14)
        u = rng.normal(0, 50.0, 4)
        r = rng.normal(0, 0.02, 4)
        wbar = rng.normal(0, 0.01, 4)
        got = cm.state_derivative(model, x, u, r, wbar)
        want = derivative_by_equations(config.params, x, u, r + wbar)
        worst = max(worst, float(np.max(np.abs(got - want)
                                        / np.maximum(np.abs(want), 1.0))))
    spot_ok = (abs(model.a[1, 0] + (config.params.kt + config.params.ks)
                   / config.params.mus) < 1e-9
               and abs(model.a[9, 1] - config.params.cs / config.params.ms) < 1e-12)
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-12 and spot_ok and elapsed < 1.0,
           f"oracle rel err {worst:.2e} (<=1e-12), spot entries ok, "
           f"{elapsed:.2f}s (<1s)")


def test_c2_discretization(scenario):
    _, model, discrete = scenario
    one = cm.zoh(model, 0.01)
    two = cm.zoh(model, 0.02)
    semigroup = max(float(np.max(np.abs(one.ad @ one.ad - two.ad))),
                    float(np.max(np.abs(one.ad @ one.bd + one.bd - two.bd))),
                    float(np.max(np.abs(one.ad @ one.brd + one.brd - two.brd))))
    x0 = np.array(cm.RunConfig.from_file(cm.paper_scenario_path()).sim.initial_state)
    u = np.array([40.0, -20.0, 10.0, 5.0])
    road = np.array([0.01, 0.0, -0.005, 0.02])
    x_zoh = discrete.ad @ x0 + discrete.bd @ u + discrete.brd @ road
    x_rk4 = rk4_rollout(model, x0, u, road, np.zeros(4), 1e-5, 1000)
    step_err = float(np.max(np.abs(x_zoh - x_rk4)))
    report(2, semigroup <= 1e-9 and step_err <= 1e-8,
           f"semigroup {semigroup:.2e} (<=1e-9), one-step vs fine RK4 "
           f"{step_err:.2e} (<=1e-8)")


def test_c3_qp_grid_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    box_lo = np.array([-1.0, -1.0])
    box_hi = np.array([1.0, 1.0])
    worst_coord = 0.0
    worst_kkt = 0.0
    for trial in range(50):
        h, f = random_psd_instance(rng, scale=1.0 + trial % 3)
        sol = solve_qp(QpProblem(h=h, f=f, g=np.eye(2), lo=box_lo, hi=box_hi),
                       tol=1e-8)
        assert sol.solved, f"instance {trial} unsolved"
        worst_kkt = max(worst_kkt, sol.stationarity, sol.primal,
                        sol.complementarity)
        brute = grid_box_argmin(h, f, box_lo, box_hi)
        worst_coord = max(worst_coord, float(np.max(np.abs(sol.z - brute))))
    elapsed = time.perf_counter() - start
    report(3, worst_coord <= 2e-3 and worst_kkt <= 1e-8 and elapsed < 30.0,
           f"grid gap {worst_coord:.2e} (<=2e-3), KKT {worst_kkt:.2e} "
           f"(<=1e-8), {elapsed:.1f}s (<30s)")


def test_c4_mhe_equals_kf_when_unconstrained(scenario):
    config, model, discrete = scenario
    start = time.perf_counter()
    free = dataclasses.replace(config.mhe, v_lo=None, v_hi=None)
    trajectory = cm.run_plant(model, discrete, config.road, config.sim)
    mhe = cm.MovingHorizonEstimator(discrete=discrete, c=model.c, config=free)
    mhe_x = mhe.filter(trajectory.measurements, us=trajectory.inputs,
                       roads=trajectory.roads)
    kf = cm.KalmanFilter(discrete=discrete, c=model.c,
                         q_cov=np.diag(free.disturbance_diag(4)),
                         r_cov=np.diag(free.measurement_diag(7)),
                         x0=np.zeros(14), pi0=np.eye(14), cov_reg=free.cov_reg)
    kf_x = kf.filter(trajectory.measurements, us=trajectory.inputs,
                     roads=trajectory.roads)
    gap = float(np.max(np.abs(mhe_x - kf_x)))
    elapsed = time.perf_counter() - start
    report(4, gap <= 1e-6 and elapsed < 60.0,
           f"max |mhe - kf| {gap:.2e} (<=1e-6) over 601 steps, "
           f"{elapsed:.1f}s (<60s)")


def test_c5_scenario_tracking(scenario_run):
    trajectory, estimates, _ = scenario_run
    times = trajectory.times
    err = np.abs(estimates - trajectory.states)
    score = times >= 1.0
    settle = (times >= 2.0) & (times <= 2.5)

    rmse = np.array([float(np.sqrt(np.mean(err[score, i] ** 2)))
                     for i in UNMEASURED])
    decay = np.array([float(np.sqrt(np.mean(err[settle, i] ** 2)) / err[0, i])
                      for i in UNMEASURED])
    # regression pins from the first verified run: rmse 1.43e-3, decay 0.030
    rmse_ok = np.all(rmse <= 0.02) and np.all(rmse <= 3e-3)
    decay_ok = np.all(decay <= 0.1) and np.all(decay <= 0.06)
    report(5, bool(rmse_ok and decay_ok),
           f"unmeasured RMSE[1s,6s] max {rmse.max():.2e} (<=0.02, pin 3e-3); "
           f"error at 2s / initial max {decay.max():.3f} (<=0.1, pin 0.06)")


def test_c6_state_box_binds(scenario):
    config, model, discrete = scenario
    sim = dataclasses.replace(config.sim, duration=2.0)
    trajectory = cm.run_plant(model, discrete, config.road, sim)
    heave_hi = 0.04
    boxed_cfg = dataclasses.replace(
        config.mhe,
        x_lo=tuple([-np.inf] * 8 + [-heave_hi] + [-np.inf] * 5),
        x_hi=tuple([np.inf] * 8 + [heave_hi] + [np.inf] * 5))
    free = cm.MovingHorizonEstimator(discrete=discrete, c=model.c,
                                     config=config.mhe)
    free_x = free.filter(trajectory.measurements, us=trajectory.inputs,
                         roads=trajectory.roads)
    boxed = cm.MovingHorizonEstimator(discrete=discrete, c=model.c,
                                      config=boxed_cfg)
    boxed_x = boxed.filter(trajectory.measurements, us=trajectory.inputs,
                           roads=trajectory.roads)

    free_violates = bool(np.any(free_x[:, 8] > heave_hi))
    violation = float(np.max(boxed_x[:, 8] - heave_hi))
    window_violation = max(
        float(np.max(rec.window_states[:, 8] - heave_hi))
        for rec in boxed.records_)
    on_boundary = abs(float(np.max(boxed_x[:, 8])) - heave_hi) <= 1e-6
    all_solved = all(rec.qp_status == "solved" for rec in boxed.records_)
    report(6, free_violates and violation <= 1e-8
           and window_violation <= 1e-8 and on_boundary and all_solved,
           f"unconstrained peak {free_x[:, 8].max():.4f} > {heave_hi}; "
           f"constrained violation {violation:.1e} (<=1e-8), window "
           f"violation {window_violation:.1e}, boundary attained, all solved")


def test_c7_transport_transparency(tmp_path):
    sim_out = tmp_path / "sim"
    assert main(["simulate", "--out", str(sim_out)]) == 0

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    cloud_out = tmp_path / "cloud"
    vehicle_out = tmp_path / "vehicle"
    cloud_code = {}

    def cloud():
        cloud_code["code"] = main(["serve-cloud", "--out", str(cloud_out),
                                   "--listen", f"127.0.0.1:{port}",
                                   "--timeout", "60"])

    thread = threading.Thread(target=cloud)
    thread.start()
    vehicle_code = main(["run-vehicle", "--out", str(vehicle_out),
                         "--connect", f"127.0.0.1:{port}", "--timeout", "60"])
    thread.join(timeout=120)
    identical = (cloud_out / "estimates.csv").read_bytes() == \
        (sim_out / "estimates.csv").read_bytes()
    report(7, vehicle_code == 0 and cloud_code.get("code") == 0 and identical,
           "distributed estimates.csv identical bit-for-bit to in-process run"
           if identical else "distributed estimates.csv differs")


def test_c8_delay_robustness(scenario):
    config, model, discrete = scenario
    sim = dataclasses.replace(config.sim, duration=2.0)
    rmse_by_delay = []
    for delay in (0.0, 10.0, 30.0):
        estimator = cm.MovingHorizonEstimator(discrete=discrete, c=model.c,
                                              config=config.mhe)
        result = run_session(model, discrete, config.road, sim, estimator,
                             ChannelConfig(base_delay=delay, seed=1))
        errors = []
        for p in range(len(result.trajectory)):
            seq = result.held_seq[p]
            if seq < 0:
                continue
            held = np.asarray(result.estimates[seq].xhat)
            errors.append((held - result.trajectory.states[p])[UNMEASURED])
        rmse_by_delay.append(float(np.sqrt(np.mean(np.square(errors)))))

    finite = all(np.isfinite(v) for v in rmse_by_delay)
    monotone = all(a <= b for a, b in zip(rmse_by_delay, rmse_by_delay[1:]))

    rng = np.random.default_rng(31337)
    crashes = 0
    for _ in range(1000):
        blob = rng.bytes(int(rng.integers(0, 160)))
        try:
            decode_frame(blob)
        except FrameError:
            pass
        except Exception:
            crashes += 1
    report(8, finite and monotone and crashes == 0,
           f"held-estimate RMSE over delays 0/10/30ms = "
           f"{', '.join(f'{v:.4f}' for v in rmse_by_delay)} (finite, "
           f"non-decreasing); decoder fuzz crashes {crashes}/1000")


def test_c9_scalar_riccati_fixed_point():
    disc = cm.DiscreteModel(ad=np.array([[1.0]]), bd=np.array([[0.0]]),
                            brd=np.array([[1.0]]), ts=1.0)
    prior = cm.ArrivalCost(xbar=np.zeros(1), pi=np.eye(1))
    for _ in range(200):
        _, prior = cm.kf_step(disc, np.array([[1.0]]), prior, [0.0], [0.0],
                              [0.0], np.eye(1), np.eye(1))
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    gap = abs(prior.pi[0, 0] - golden)
    report(9, gap <= 1e-9,
           f"covariance fixed point {prior.pi[0, 0]:.12f} vs (1+sqrt(5))/2, "
           f"gap {gap:.2e} (<=1e-9)")
