import math

import numpy as np
import pytest

from coevo.dynamics import (SystemState, Trajectory, contraction_window, integrate, picard_apply, picard_solve,
                            rhs, sync_manifold_solution, weights_exact_history, weights_exact_update)
from coevo.errors import BlowUpError, ConfigError
from coevo.graphon import Kernel, discretize
from coevo.metrics import d_interval_infty
from coevo.model import CouplingSpec, FrequencySpec, ModelSpec, make_berner


def _drift_model(omega: float = 1.0, T: float = 1.0) -> ModelSpec:
    return ModelSpec(CouplingSpec.sine_lag(0.0, 0.0), CouplingSpec.sine_lag(1.0, 0.0),
                     FrequencySpec.constant(omega), 0.0, 0.0, T)


def _frozen_model(epsilon: float, T: float) -> ModelSpec:
    return ModelSpec(CouplingSpec.sine_lag(0.0, 0.0), CouplingSpec.sine_lag(1.0, 0.4),
                     FrequencySpec.constant(0.0), epsilon, 0.0, T)


def test_state_validates_shapes_and_values() -> None:
    with pytest.raises(ConfigError):
        SystemState(0.0, np.zeros(3), np.zeros((2, 2)))
    with pytest.raises(ConfigError):
        SystemState(0.0, [np.nan], [[1.0]])


def test_trajectory_requires_increasing_times() -> None:
    with pytest.raises(ConfigError):
        Trajectory(_drift_model(), [0.0, 0.0], np.zeros((2, 1)), np.ones((2, 1, 1)))


def test_trajectory_must_start_at_model_t0() -> None:
    with pytest.raises(ConfigError) as excinfo:
        Trajectory(_drift_model(), [0.5, 1.0], np.zeros((2, 1)), np.ones((2, 1, 1)))
    assert excinfo.value.field == "trajectory.times"
    shifted = ModelSpec(CouplingSpec.sine_lag(0.0, 0.0), CouplingSpec.sine_lag(1.0, 0.0),
                        FrequencySpec.constant(1.0), 0.0, 0.5, 1.0)
    assert len(Trajectory(shifted, [0.5 + 1e-12, 1.0], np.zeros((2, 1)), np.ones((2, 1, 1)))) == 2


def test_rhs_on_sync_manifold() -> None:
    a, w, omega = 0.3, 0.8, 1.2
    model = ModelSpec(CouplingSpec.sine_lag(1.0, a), CouplingSpec.sine_lag(1.0, 0.0),
                      FrequencySpec.constant(omega), 0.1)
    state = SystemState(0.0, np.full(5, 0.7), np.full((5, 5), w))
    dphases, _ = rhs(state, model, np.full(5, omega))
    np.testing.assert_allclose(dphases, omega + w * math.sin(a), atol=1e-14)


def test_rhs_two_oscillators() -> None:
    model = make_berner(0.0, 0.0, 0.0, 0.0)
    state = SystemState(0.0, [0.0, math.pi / 2], np.ones((2, 2)))
    dphases, dweights = rhs(state, model, np.zeros(2))
    np.testing.assert_allclose(dphases, [-0.5, 0.5], atol=1e-15)
    np.testing.assert_array_equal(dweights, np.zeros((2, 2)))


def test_rhs_weight_relaxation() -> None:
    model = make_berner(0.0, 0.0, 0.5, 0.2)
    phases = np.array([0.1, 1.0, 2.5])
    weights = np.arange(9.0).reshape(3, 3)
    _, dweights = rhs(SystemState(0.0, phases, weights), model, np.zeros(3))
    expected = -0.2 * (weights + np.sin(phases[:, None] - phases[None, :] + 0.5))
    np.testing.assert_allclose(dweights, expected, atol=1e-14)


def test_integrate_linear_drift_is_exact() -> None:
    model = _drift_model(omega=1.5, T=1.0)
    phi0 = np.array([0.0, 0.5, 2.0])
    w0 = np.array([[1.0, 2.0, 0.0], [0.5, 0.5, 0.5], [3.0, 1.0, 1.0]])
    tr = integrate(SystemState(0.0, phi0, w0), model, 0.01, sample_stride=10)
    assert len(tr) == 11
    np.testing.assert_allclose(tr.phases, phi0[None, :] + 1.5 * tr.times[:, None], atol=1e-12)
    np.testing.assert_array_equal(tr.weights, np.broadcast_to(w0, tr.weights.shape))


def test_integrate_snapshots_end_at_final_time() -> None:
    model = make_berner(1.0, 0.2, 0.0, 0.1, t0=0.5, T=0.3)
    state = SystemState(0.5, [0.0, 1.0], np.ones((2, 2)))
    tr = integrate(state, model, 0.01, sample_stride=7)
    assert tr.times[0] == 0.5
    assert tr.times[-1] == pytest.approx(0.8, abs=1e-12)
    assert np.all(np.diff(tr.times) > 0)


def test_integrate_rejects_dt_not_dividing_horizon() -> None:
    with pytest.raises(ConfigError):
        integrate(SystemState(0.0, [0.0], [[1.0]]), _drift_model(T=1.0), 0.3)


def test_integrate_requires_cell_frequencies_for_varying_omega() -> None:
    model = _drift_model().with_omega(FrequencySpec.affine(0.0, 1.0))
    with pytest.raises(ConfigError):
        integrate(SystemState(0.0, [0.0, 0.0], np.ones((2, 2))), model, 0.1)


def test_integrate_reports_blow_up() -> None:
    with pytest.raises(BlowUpError) as excinfo:
        integrate(SystemState(0.0, [0.0], [[1.0]]), _drift_model(omega=1e308), 0.5)
    assert excinfo.value.step >= 1


def test_sync_manifold_oracle_matches_rk4() -> None:
    model = make_berner(1.0, 0.3, 0.7, 0.05, 0.0, 5.0)
    n = 16
    tr = integrate(SystemState(0.0, np.full(n, 0.5), np.ones((n, n))), model, 1e-3, sample_stride=100)
    phase_error = weight_error = 0.0
    for k, t in enumerate(tr.times):
        phi, w = sync_manifold_solution(0.5, 1.0, model, float(t))
        phase_error = max(phase_error, float(np.max(np.abs(tr.phases[k] - phi))))
        weight_error = max(weight_error, float(np.max(np.abs(tr.weights[k] - w))))
    assert phase_error <= 1e-6
    assert weight_error <= 1e-6


def test_sync_manifold_is_invariant() -> None:
    model = make_berner(1.0, 0.3, 0.7, 0.5, 0.0, 2.0)
    n = 8
    tr = integrate(SystemState(0.0, np.full(n, 1.3), np.full((n, n), 0.6)), model, 1e-2, sample_stride=1)
    phase_spread = np.max(tr.phases, axis=1) - np.min(tr.phases, axis=1)
    weight_spread = np.max(tr.weights, axis=(1, 2)) - np.min(tr.weights, axis=(1, 2))
    assert np.all(phase_spread <= 1e-10)
    assert np.all(weight_spread <= 1e-10)


def test_sync_manifold_special_cases() -> None:
    no_lag = make_berner(2.0, 0.0, 0.4, 0.3, 0.0, 1.0)
    assert sync_manifold_solution(0.1, 5.0, no_lag, 1.0)[0] == pytest.approx(2.1)
    static = make_berner(0.0, math.pi / 2, 0.0, 0.0, 0.0, 1.0)
    assert sync_manifold_solution(0.2, 1.0, static, 0.75)[0] == pytest.approx(0.95)
    relaxing = make_berner(0.0, 0.0, 0.6, 0.5, 0.0, 1.0)
    assert sync_manifold_solution(0.0, 3.0, relaxing, 200.0)[1] == pytest.approx(-math.sin(0.6), abs=1e-12)


def test_sync_manifold_rejects_tabulated_coupling() -> None:
    grid = 2 * math.pi * np.arange(4) / 4
    model = ModelSpec(CouplingSpec.tabulated(np.sin(grid[:, None] - grid[None, :])),
                      CouplingSpec.sine_lag(), FrequencySpec.constant(0.0))
    with pytest.raises(ConfigError):
        sync_manifold_solution(0.0, 1.0, model, 0.5)


def test_exact_weight_update_examples() -> None:
    model = _frozen_model(epsilon=0.01, T=10.0)
    times = np.linspace(0.0, 10.0, 1001)
    frozen = np.tile([0.0, 0.0], (times.size, 1))
    h = 1.0 * math.sin(0.4)
    w = weights_exact_update(np.zeros((2, 2)), times, frozen, model)
    np.testing.assert_allclose(w, -(1.0 - math.exp(-0.1)) * h, atol=1e-9)

    history = weights_exact_history(np.full((2, 2), 0.3), times, frozen, model)
    np.testing.assert_array_equal(history[0], np.full((2, 2), 0.3))

    decay = ModelSpec(CouplingSpec.sine_lag(0.0, 0.0), CouplingSpec.sine_lag(0.0, 0.0),
                      FrequencySpec.constant(0.0), 0.01, 0.0, 10.0)
    w = weights_exact_update(np.ones((2, 2)), times, frozen, decay)
    np.testing.assert_allclose(w, math.exp(-0.1), atol=1e-12)


def test_integrating_factor_oracle_matches_rk4_on_frozen_phases() -> None:
    model = _frozen_model(epsilon=0.01, T=10.0)
    phases = np.array([0.0, 0.7, 2.0, 4.5])
    w0 = np.array([[1.0, 0.5, 0.2, 0.0], [0.3, 1.0, 0.1, 0.4], [0.0, 0.2, 1.0, 0.9], [0.6, 0.0, 0.3, 1.0]])
    tr = integrate(SystemState(0.0, phases, w0), model, 1e-3, sample_stride=1)
    exact = weights_exact_history(w0, tr.times, tr.phases, model)
    assert float(np.max(np.abs(exact - tr.weights))) <= 1e-8


def test_integrating_factor_gap_along_coupled_phases_is_second_order() -> None:
    model = make_berner(1.0, 0.3, 0.7, 0.5, 0.0, 1.0)
    disc = discretize(Kernel.cosine_shift(1.0, 0.5), lambda x: 2 * math.pi * x, model.omega, 8)
    initial = SystemState.from_lift(0.0, disc.phases, disc.graphon)
    gaps = []
    for dt in (1e-2, 5e-3):
        tr = integrate(initial, model, dt, frequencies=disc.frequencies)
        exact = weights_exact_history(initial.weights, tr.times, tr.phases, model)
        gaps.append(float(np.max(np.abs(exact - tr.weights))))
    assert gaps[1] > 0.0
    assert gaps[0] / gaps[1] >= 3.5


def test_weight_bound_holds_on_random_configurations() -> None:
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(1, 6))
        model = make_berner(rng.uniform(-1, 1), rng.uniform(-math.pi, math.pi), rng.uniform(-math.pi, math.pi),
                            rng.uniform(0.0, 0.5), 0.0, 0.5)
        state = SystemState(0.0, rng.uniform(0, 2 * math.pi, n), rng.uniform(-1.0, 2.0, (n, n)))
        tr = integrate(state, model, 0.05, sample_stride=1)
        assert tr.weight_bound_violations() == []
        cap = np.max(np.abs(state.weights)) + model.H.sup_norm
        assert np.all(np.max(np.abs(tr.weights), axis=(1, 2)) <= cap + 1e-12)


def test_contraction_window_bounds() -> None:
    model = make_berner(1.0, 0.3, 0.7, 0.05, 0.0, 0.5)
    m3, t_star = contraction_window(model, 1.0)
    expected = 4.0 * (math.sqrt(2.0) + 1.0 + 0.05 * (1.0 + math.sqrt(2.0))) * 3.0
    assert m3 == pytest.approx(expected)
    assert t_star == pytest.approx(0.5 / expected)
    assert m3 * t_star <= 0.5 + 1e-15
    assert contraction_window(_drift_model(T=0.7), 0.0) == (0.0, 0.7)


def test_picard_apply_on_pure_drift() -> None:
    model = _drift_model(omega=2.0, T=1.0)
    times = np.linspace(0.0, 1.0, 11)
    initial = SystemState(0.0, [0.5, 1.0], np.eye(2))
    candidate = Trajectory(model, times, np.tile(initial.phases, (11, 1)), np.tile(initial.weights, (11, 1, 1)),
                           np.full(2, 2.0))
    image = picard_apply(candidate, initial, model)
    np.testing.assert_allclose(image.phases, initial.phases[None, :] + 2.0 * times[:, None], atol=1e-14)
    np.testing.assert_array_equal(image.weights[-1], np.eye(2))
    np.testing.assert_array_equal(image.phases[0], initial.phases)


def test_picard_apply_without_cached_frequencies_uses_constant_omega() -> None:
    model = _drift_model(omega=0.5, T=1.0)
    times = np.linspace(0.0, 1.0, 5)
    initial = SystemState(0.0, [0.0, 3.0, 1.0], np.ones((3, 3)))
    candidate = Trajectory(model, times, np.tile(initial.phases, (5, 1)), np.tile(initial.weights, (5, 1, 1)))
    assert candidate.frequencies is None
    image = picard_apply(candidate, initial, model)
    np.testing.assert_allclose(image.phases, initial.phases[None, :] + 0.5 * times[:, None], atol=1e-14)
    np.testing.assert_array_equal(image.frequencies, np.full(3, 0.5))

    varying = model.with_omega(FrequencySpec.affine(0.0, 1.0))
    with pytest.raises(ConfigError):
        picard_apply(Trajectory(varying, times, candidate.phases, candidate.weights), initial, varying)


def test_picard_solve_keeps_a_late_start_time() -> None:
    model = make_berner(1.0, 0.3, 0.7, 0.05, t0=2.0, T=0.2)
    initial = SystemState(2.0, [0.0, 1.0, 2.5], np.ones((3, 3)))
    result = picard_solve(initial, model, 1e-3, tol=1e-8)
    assert result.trajectory.times[0] == 2.0
    assert result.trajectory.times[-1] == pytest.approx(2.2, abs=1e-12)
    rk4 = integrate(initial, model, 1e-3)
    assert d_interval_infty(result.trajectory, rk4) <= 1e-5


def test_picard_apply_fixes_the_rk4_solution_up_to_quadrature_error() -> None:
    model = make_berner(1.0, 0.3, 0.7, 0.05, 0.0, 0.2)
    initial = SystemState(0.0, [0.0, 1.0, 2.5], np.ones((3, 3)))
    tr = integrate(initial, model, 1e-3)
    image = picard_apply(tr, initial, model)
    assert d_interval_infty(image, tr) <= 1e-5


def test_picard_solve_pure_drift_converges_immediately() -> None:
    model = _drift_model(omega=1.0, T=0.5)
    initial = SystemState(0.0, [0.0, 1.0], np.ones((2, 2)))
    result = picard_solve(initial, model, 0.01, tol=1e-9)
    assert result.windows == 1
    assert result.iterations == [1]
    rk4 = integrate(initial, model, 0.01)
    assert d_interval_infty(result.trajectory, rk4) <= 1e-12


def test_picard_agrees_with_rk4_for_berner() -> None:
    model = make_berner(1.0, 0.3, 0.7, 0.05, 0.0, 0.5)
    disc = discretize(Kernel.cosine_shift(1.0, 0.5), lambda x: 2 * math.pi * x, model.omega, 8)
    initial = SystemState.from_lift(0.0, disc.phases, disc.graphon)
    result = picard_solve(initial, model, 1e-3, tol=1e-6, max_iter=50, frequencies=disc.frequencies)
    rk4 = integrate(initial, model, 1e-3, frequencies=disc.frequencies)
    assert d_interval_infty(result.trajectory, rk4) <= 1e-5
    cap = math.log(1e-6) / math.log(0.5) + 1
    assert all(count <= cap for count in result.iterations)
