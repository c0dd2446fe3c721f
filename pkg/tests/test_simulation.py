from dataclasses import replace

import numpy as np
import pytest

from plant.scenarios import builtin_scenario, dump_scenario, load_scenario, with_updates
from services.baselines import GradientLaw, RobustLaw, SigmaModLaw
from services.controller import ControllerKind, RiseLaw, closed_loop_r_dot_check
from services.simulation import (
    Integrator,
    SimulationDivergedError,
    TrajectoryRecord,
    build_law,
    run,
    step,
)


def test_zero_horizon_gives_single_sample(s1_short):
    record = run(with_updates(s1_short, t_end=0.0))
    assert len(record) == 1
    assert record.t.tolist() == [0.0]
    e0 = record.e[0]
    assert record.V_L[0] == pytest.approx(0.5 * record.r[0] @ record.r[0] + 0.5 * e0 @ e0 + record.P[0])


def test_initial_P_uses_initial_error(s1_short_record, s1_short):
    # P(0) = β·Σ|e(0)| − e(0)ᵀN_B(0); при θ̂(0) = 0 и x_d(0) = 0: N_B = Y_dθ̇ + Ẏ_dθ = 0·1 + 1·1
    assert s1_short_record.P[0] == pytest.approx(s1_short.gains.beta - 1.0, abs=1e-8)


def test_sample_count_and_times(s1_short_record, s1_short):
    assert len(s1_short_record) == s1_short.steps + 1
    assert s1_short_record.t[-1] == pytest.approx(s1_short.t_end)
    assert np.all(np.diff(s1_short_record.t) > 0)


def test_oracle_init_is_an_equilibrium(oracle_s3):
    record = run(oracle_s3)
    assert len(record) == 101
    assert np.all(record.e == 0.0)
    assert np.all(record.theta_hat == np.array([1.0, 0.0]))
    assert np.all(record.mu == 0.0)
    assert np.all(record.V_L == 0.0)


def test_zero_dynamics_plant_tracks_sine():
    # Y_h ≡ 0, d ≡ 0: объект ẋ = u
    scenario = builtin_scenario("S4_disturbance_only", params={"amplitude": 0.0}, t_end=10.0)
    record = run(scenario)
    assert abs(record.e[-1, 0]) < 1e-3
    assert np.max(np.linalg.norm(record.theta_hat, axis=1)) <= scenario.gains.theta_bar + 1e-6


def test_theta_hat_stays_in_ball(s1_short_record, s1_short):
    norms = np.linalg.norm(s1_short_record.theta_hat, axis=1)
    assert np.max(norms) <= s1_short.gains.theta_bar * (1.0 + 1e-9)


def test_run_is_deterministic(s1_short):
    scenario = with_updates(s1_short, t_end=0.5)
    first, second = run(scenario), run(scenario)
    for label in TrajectoryRecord.SIGNALS:
        assert np.array_equal(getattr(first, label), getattr(second, label)), label


def test_step_halving_without_switches():
    # e(0) = 1 и θ̂ далеко от границы: на 0.2 с знак и ветка не меняются, RK4 даёт ~16x
    finals = []
    for dt in (4e-3, 2e-3, 1e-3):
        record = run(builtin_scenario("S3_constant_param", t_end=0.2, dt=dt))
        assert np.all(record.e[:, 0] > 0)
        assert not np.any(record.boundary)
        assert record.switch_count == 0
        finals.append(np.concatenate((record.x[-1], record.theta_hat[-1], record.mu[-1])))
    coarse = np.linalg.norm(finals[0] - finals[1])
    fine = np.linalg.norm(finals[1] - finals[2])
    assert coarse / fine >= 8.0


def test_n_tilde_vanishes_at_equilibrium(oracle_s3):
    record = run(oracle_s3)
    assert np.max(np.abs(record.n_tilde)) < 1e-9


def test_config_round_trip_reproduces_run(tmp_path, s1_short):
    scenario = with_updates(s1_short, t_end=0.3)
    path = tmp_path / "s1.json"
    dump_scenario(scenario, str(path))
    reloaded = load_scenario(str(path))
    first, second = run(scenario), run(reloaded)
    for label in TrajectoryRecord.SIGNALS:
        assert np.array_equal(getattr(first, label), getattr(second, label)), label


def test_record_is_read_only(s1_short_record):
    with pytest.raises(ValueError):
        s1_short_record.x[0, 0] = 10.0


def test_single_step_advances_time(s1_short):
    integrator = Integrator(s1_short)
    state = integrator.initial_state()
    nxt = step(state, s1_short)
    assert nxt.t == pytest.approx(s1_short.dt)
    assert np.all(np.isfinite(nxt.x))
    assert state.t == 0.0


def test_reprojection_keeps_r(s1_short):
    integrator = Integrator(s1_short)
    t = 0.7
    Yd = integrator.signals(t).Yd
    theta_hat = np.array([3.0, -1.0])
    mu = np.array([0.25])
    projected, corrected = integrator._reproject(t, theta_hat, mu)

    assert np.linalg.norm(projected) == pytest.approx(s1_short.gains.theta_bar)
    # r = (Y−Y_d)θ + Y_dθ − Y_dθ̂ + μ: слагаемое −Y_dθ̂ + μ не меняется
    assert (corrected - Yd @ projected)[0] == pytest.approx((mu - Yd @ theta_hat)[0], abs=1e-14)
    assert integrator.renormalizations == 1


def test_inside_ball_is_untouched(s1_short):
    integrator = Integrator(s1_short)
    theta_hat = np.array([0.3, 0.1])
    mu = np.array([0.2])
    projected, corrected = integrator._reproject(0.0, theta_hat, mu)
    assert projected is theta_hat and corrected is mu
    assert integrator.renormalizations == 0


def test_divergence_is_reported_with_step_index(s1_short):
    gains = replace(s1_short.gains, K=200.0)
    scenario = with_updates(s1_short, gains=gains, dt=0.1, t_end=10.0)
    with pytest.raises(SimulationDivergedError) as info:
        run(scenario)
    assert info.value.step_index >= 1
    assert f"step {info.value.step_index}" in str(info.value)
    assert np.all(np.isfinite(info.value.last_state.x))


@pytest.mark.parametrize(
    "kind, law",
    [
        (ControllerKind.RISE, RiseLaw),
        (ControllerKind.SIGMA_MOD, SigmaModLaw),
        (ControllerKind.GRADIENT, GradientLaw),
        (ControllerKind.ROBUST, RobustLaw),
    ],
)
def test_build_law(s1_short, kind, law):
    built = build_law(s1_short, kind)
    assert type(built) is law
    assert built.kind is kind


@pytest.mark.parametrize("kind", [ControllerKind.SIGMA_MOD, ControllerKind.GRADIENT, ControllerKind.ROBUST])
def test_baseline_records_have_no_rise_state(s1_short, kind):
    record = run(with_updates(s1_short, t_end=0.5), kind)
    assert record.kind is kind
    assert np.all(record.mu == 0.0)
    assert np.all(record.P == 0.0)
    assert not np.any(record.boundary)
    # r = ė + αe с α сценария
    assert np.all(np.isfinite(record.r))


def test_robust_law_does_not_adapt(s1_short):
    record = run(with_updates(s1_short, t_end=0.5), ControllerKind.ROBUST)
    assert np.all(record.theta_hat == 0.0)


def test_closed_loop_rate_residual_is_small(s1_short_record, s1_short):
    residual, mask = closed_loop_r_dot_check(s1_short_record, s1_short.model, s1_short.reference, s1_short.gains)
    assert residual.shape == mask.shape == (len(s1_short_record) - 1,)
    assert np.any(mask)
    assert np.max(residual[mask]) < 0.5
