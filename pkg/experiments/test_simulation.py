# experiments/test_simulation.py
import numpy as np
import pytest

from core.controller import ControllerState, control, observe, successor_pieces, value_upper
from core.errors import DimensionMismatch, ZeroDisturbance
from simulators.disturbances import DisturbanceSpec, adversarial_disturbance, white_noise
from simulators.metrics import empirical_gain, energy_identity_error, growth_ratios, lock_in_time, switch_times
from simulators.plant_sim import THREADS_ENV, ScenarioEvent, SimulationJob, Trajectory, run_batch, simulate
from experiments.run_experiments import (
    EXAMPLE_A,
    PRINTED_T,
    example_models,
    example_spec,
    pinned_growth_rate,
    printed_certificate,
    spectral_radius,
    worst_case_map,
)

X0 = np.array([1.0, 0.0, 0.0])


def _payoff_bound_gap(traj, cert):
    """Largest running payoff minus Vbar(x0, 0) over all steps."""
    bound = value_upper(cert, np.zeros(cert.N), traj.xs[0])[0]
    return float(np.max(traj.cum_costs)) - bound


def test_zero_state_zero_disturbance_stays_zero(example_cert):
    traj = simulate(example_models(), 0, example_cert, example_spec(), np.zeros(3), 25, DisturbanceSpec.zero())
    assert not np.any(traj.xs) and not np.any(traj.us)
    assert traj.cum_payoff == 0.0
    with pytest.raises(ZeroDisturbance):
        empirical_gain(traj)


def test_energy_identity_for_true_model(example_cert):
    for true_index in (0, 1):
        traj = simulate(example_models(), true_index, example_cert, example_spec(), X0, 100,
                        DisturbanceSpec.white(0.1, seed=true_index))
        assert energy_identity_error(traj) <= 1e-9


def test_payoff_bounded_by_value_at_start_white(example_cert, rng):
    models, spec = example_models(), example_spec()
    for seed in range(100):
        x0 = rng.standard_normal(3)
        traj = simulate(models, seed % 2, example_cert, spec, x0, 100, DisturbanceSpec.white(0.1, seed))
        assert _payoff_bound_gap(traj, example_cert) <= 1e-6


def test_payoff_bounded_by_value_at_start_adversarial(example_cert, rng):
    models, spec = example_models(), example_spec()
    for run in range(10):
        x0 = rng.standard_normal(3)
        traj = simulate(models, run % 2, example_cert, spec, x0, 60, DisturbanceSpec.adversarial())
        assert _payoff_bound_gap(traj, example_cert) <= 1e-6
        assert all(p is not None for p in traj.pairs)


def test_adversary_is_a_local_maximizer(example_cert, rng):
    """The chosen next state maximizes the post-update value over a local grid."""
    models, spec = example_models(), example_spec()
    gamma = example_cert.gamma
    state = ControllerState.initial(2)
    x = X0
    for _ in range(5):
        u = control(state, example_cert, x)
        w, _ = adversarial_disturbance(example_cert, state, models, x, u, 0)
        v_star = models.A(0) @ x + models.B(0) @ u + w

        def after(v):
            return value_upper(example_cert, observe(state, models, gamma, x, u, v), v)[0]

        best = after(v_star)
        step = 1e-2 * (1.0 + np.linalg.norm(v_star))
        for _ in range(200):
            assert after(v_star + step * rng.uniform(-1.0, 1.0, size=3)) <= best + 1e-6 * (1.0 + abs(best))
        state = observe(state, models, gamma, x, u, v_star)
        x = v_star


def test_adversarial_step_attains_best_successor_piece(example_cert):
    models = example_models()
    gamma = example_cert.gamma
    state = ControllerState.initial(models.N)
    x = X0
    for _ in range(5):
        u = control(state, example_cert, x)
        w, pair = adversarial_disturbance(example_cert, state, models, x, u, 1)
        v_star = models.A(1) @ x + models.B(1) @ u + w
        pieces = successor_pieces(example_cert, models, state.z, x, u)
        assert pieces[pair] == pytest.approx(float(np.max(pieces)))
        state = observe(state, models, gamma, x, u, v_star)
        assert value_upper(example_cert, state, v_star)[0] == pytest.approx(float(np.max(pieces)), rel=1e-7, abs=1e-8)
        x = v_star


def test_pinned_cross_piece_grows_at_worst_case_rate():
    rate = spectral_radius(worst_case_map(PRINTED_T, EXAMPLE_A, 19.0))
    assert rate > 1.0
    observed = pinned_growth_rate(printed_certificate(), example_models(), example_spec())
    assert observed == pytest.approx(rate, rel=1e-2)


def test_overflow_truncates_the_run():
    traj = simulate(example_models(), 0, printed_certificate(), example_spec(), X0, 40,
                    DisturbanceSpec.adversarial(pair=(0, 1)), overflow_limit=1e6)
    assert traj.truncated
    assert traj.steps < 40
    assert np.all(np.isfinite(growth_ratios(traj)))


def test_runs_are_deterministic(example_cert):
    args = (example_models(), 1, example_cert, example_spec(), X0, 80, DisturbanceSpec.white([0.1, 0.2, 0.0], 7))
    a, b = simulate(*args), simulate(*args)
    np.testing.assert_array_equal(a.xs, b.xs)
    np.testing.assert_array_equal(a.ks, b.ks)
    np.testing.assert_array_equal(a.stage_costs, b.stage_costs)


def test_explicit_sequence_replays_white_noise(example_cert):
    w = white_noise(np.array([0.1]), 3, 30, 3)
    a = simulate(example_models(), 0, example_cert, example_spec(), X0, 30, DisturbanceSpec.white(0.1, 3))
    b = simulate(example_models(), 0, example_cert, example_spec(), X0, 30, DisturbanceSpec.explicit(w))
    np.testing.assert_array_equal(a.xs, b.xs)
    with pytest.raises(ValueError):
        simulate(example_models(), 0, example_cert, example_spec(), X0, 31, DisturbanceSpec.explicit(w))


def test_sign_flip_event_is_detected(example_cert):
    traj = simulate(example_models(), 0, example_cert, example_spec(), X0, 40, DisturbanceSpec.white(0.1, 0),
                    events=(ScenarioEvent(10, 1),))
    assert traj.true_indices[9] == 0 and traj.true_indices[10] == 1
    assert any(t > 10 for t in switch_times(traj))
    assert traj.ks[-1] == 1
    assert lock_in_time(traj, after=10) > 10
    with pytest.raises(ValueError):
        energy_identity_error(traj)
    assert energy_identity_error(traj, model=1) > 0.0


def _one_step(w: float, z_after: float) -> Trajectory:
    return Trajectory(
        xs=np.zeros((2, 1)), us=np.zeros((1, 1)), ws=np.array([[w]]), ks=np.array([0]),
        true_indices=np.array([0]), zs=np.array([[0.0], [z_after]]),
        stage_costs=np.zeros(1), state_costs=np.zeros(1), gamma=1.0,
    )


def test_energy_identity_error_is_absolute_at_small_energy():
    # energy 0.01, residual 0.02
    assert energy_identity_error(_one_step(0.1, 0.02)) == pytest.approx(0.01)
    assert energy_identity_error(_one_step(0.1, 0.01)) == pytest.approx(0.0, abs=1e-15)


def test_energy_identity_error_is_relative_at_large_energy():
    # energy 100, residual 110
    assert energy_identity_error(_one_step(10.0, 110.0)) == pytest.approx(0.1)


def test_noise_free_runs_settle(example_cert):
    for true_index in (0, 1):
        traj = simulate(example_models(), true_index, example_cert, example_spec(), X0, 200, DisturbanceSpec.zero())
        assert np.linalg.norm(traj.xs[-1]) < 1e-6
        assert traj.ks[-1] == true_index


def test_oracle_policy_uses_true_gain(example_cert):
    traj = simulate(example_models(), 1, example_cert, example_spec(), X0, 20, DisturbanceSpec.white(0.1, 1),
                    policy="oracle")
    assert np.all(traj.ks == 1)
    np.testing.assert_allclose(traj.us[0], -(example_cert.K[1] @ X0))


def test_batch_matches_serial(example_cert, monkeypatch):
    models, spec = example_models(), example_spec()
    jobs = [SimulationJob(f"run{s}", s % 2, X0, 50, DisturbanceSpec.white(0.1, s)) for s in range(8)]
    serial = run_batch(models, example_cert, spec, jobs, max_workers=1)
    monkeypatch.setenv(THREADS_ENV, "4")
    threaded = run_batch(models, example_cert, spec, jobs)
    for a, b in zip(serial, threaded):
        np.testing.assert_array_equal(a.xs, b.xs)
        np.testing.assert_array_equal(a.ks, b.ks)


def test_gain_is_scale_invariant_from_rest(example_cert):
    dist = DisturbanceSpec.white(0.1, 11)
    a = simulate(example_models(), 0, example_cert, example_spec(), np.zeros(3), 100, dist)
    b = simulate(example_models(), 0, example_cert, example_spec(), np.zeros(3), 100, dist.with_scale(32.0))
    np.testing.assert_array_equal(a.ks, b.ks)
    assert empirical_gain(b) == pytest.approx(empirical_gain(a), rel=1e-12)


def test_white_noise_gain_stays_below_gamma(example_cert):
    models, spec = example_models(), example_spec()
    jobs = [SimulationJob(f"white{s}", s % 2, np.zeros(3), 200, DisturbanceSpec.white(0.1, s)) for s in range(50)]
    gains = [empirical_gain(t) for t in run_batch(models, example_cert, spec, jobs)]
    assert max(gains) <= example_cert.gamma * (1.0 + 1e-6)


def test_argument_checks(example_cert):
    models, spec = example_models(), example_spec()
    with pytest.raises(DimensionMismatch):
        simulate(models, 0, example_cert, spec, np.zeros(2), 10, DisturbanceSpec.zero())
    with pytest.raises(ValueError):
        simulate(models, 0, example_cert, spec, X0, 10, DisturbanceSpec.zero(), policy="greedy")
    with pytest.raises(ValueError):
        simulate(models, 0, example_cert, spec, X0, 10, DisturbanceSpec.zero(), events=(ScenarioEvent(3, 2),))
    with pytest.raises(ValueError):
        simulate(models, 2, example_cert, spec, X0, 10, DisturbanceSpec.zero())
    with pytest.raises(ValueError):
        DisturbanceSpec.white(-1.0, 0)
