"""Centralized MHE oracle: unconstrained solve and constrained variant."""

import numpy as np
import pytest

from dmhe import (BoxConstraints, EmptyBoxError, NoiseSpec, WindowState,
                  cmhe_solve_constrained, cmhe_solve_unconstrained,
                  evaluate_objective, simulate)
from dmhe.cmhe import normal_equation_rhs

from conftest import (make_setup, quadratic_minimizer_by_differences,
                      random_window)


def window_from_simulation(model, derived, noise, steps=None, seed=0,
                           prior=None):
    N = derived.N
    steps = steps or N + 1
    spec = NoiseSpec(sigma_w=noise[0], sigma_v=noise[1], seed=seed)
    sim = simulate(model, np.zeros(model.n_states) if prior is None else prior,
                   None, spec, steps)
    window = WindowState.from_stages(
        N, sim.outputs[:N + 1], np.zeros((N, model.n_inputs)),
        sim.states[0] if prior is None else prior)
    return window, sim


class TestUnconstrained:
    def test_noise_free_consistent_data_gives_zero(self, rng):
        model, _, _, derived = make_setup(rng, [2, 2], N=3)
        x0 = rng.normal(size=model.n_states)
        sim = simulate(model, x0, None, NoiseSpec(seed=1), derived.N + 1)
        window = WindowState.from_stages(derived.N, sim.outputs,
                                         np.zeros((derived.N, model.n_inputs)), x0)
        estimate = cmhe_solve_unconstrained(window, derived)
        assert np.allclose(estimate.x_hat, x0, atol=1e-9)
        assert np.allclose(estimate.w_hat_window, 0, atol=1e-9)
        assert estimate.objective_value < 1e-18

    def test_scalar_system_matches_difference_oracle(self, rng):
        # hand-set single-state system, horizon one: compare against the
        # generic quadratic-minimization oracle built from the objective
        model, _, _, derived = make_setup(rng, [1], N=1, prior=0.7,
                                          disturbance=0.3, noise=0.5)
        window = WindowState(k=1, y_window=np.array([1.0, -2.0]),
                             u_window=np.array([0.5]), prior=np.array([0.3]))
        estimate = cmhe_solve_unconstrained(window, derived)

        def objective(z):
            return evaluate_objective(window, derived, z[:1], z[1:])

        oracle = quadratic_minimizer_by_differences(objective, 2)
        assert np.allclose(estimate.stacked, oracle, atol=1e-8)

    def test_objective_value_matches_reevaluation(self, rng):
        model, _, _, derived = make_setup(rng, [2, 1], N=4)
        window, _ = window_from_simulation(model, derived, (0.05, 0.05), seed=3)
        estimate = cmhe_solve_unconstrained(window, derived)
        recomputed = evaluate_objective(window, derived, estimate.x_hat,
                                        estimate.w_hat_window)
        assert np.isclose(estimate.objective_value, recomputed, rtol=1e-12)

    def test_benchmark_window_objective_reevaluation(self, benchmark,
                                                     benchmark_derived):
        window, _ = window_from_simulation(
            benchmark.model, benchmark_derived, (0.01, 0.01), seed=8,
            prior=benchmark.initial_guess_scaled)
        estimate = cmhe_solve_unconstrained(window, benchmark_derived)
        recomputed = evaluate_objective(window, benchmark_derived,
                                        estimate.x_hat, estimate.w_hat_window)
        assert np.isclose(estimate.objective_value, recomputed, rtol=1e-12)

    def test_stationarity_residual(self, rng):
        for trial in range(5):
            local = np.random.default_rng(trial)
            model, _, _, derived = make_setup(local, [2, 2], N=3)
            window = random_window(local, derived)
            estimate = cmhe_solve_unconstrained(window, derived)
            rhs = normal_equation_rhs(window, derived)
            gradient = derived.kkt @ estimate.stacked - rhs
            assert np.linalg.norm(gradient) <= 1e-9 * (1 + np.linalg.norm(rhs))


def wide_boxes(model, width=1e6):
    p = model.partition
    return BoxConstraints(
        state_lower={i: np.full(p.state_sizes[i], -width) for i in p.ids},
        state_upper={i: np.full(p.state_sizes[i], width) for i in p.ids},
        disturbance_lower={i: np.full(p.state_sizes[i], -width) for i in p.ids},
        disturbance_upper={i: np.full(p.state_sizes[i], width) for i in p.ids},
    )


class TestConstrained:
    def test_inactive_boxes_match_unconstrained(self, rng):
        model, _, _, derived = make_setup(rng, [2, 1], N=2)
        window = random_window(rng, derived)
        unconstrained = cmhe_solve_unconstrained(window, derived)
        constrained = cmhe_solve_constrained(window, derived, wide_boxes(model))
        assert np.allclose(constrained.stacked, unconstrained.stacked, atol=1e-6)

    def test_scalar_problem_clamps_at_bound(self, rng):
        model, _, _, derived = make_setup(rng, [1], N=1)
        window = WindowState(k=1, y_window=np.array([4.0, 4.0]),
                             u_window=np.array([0.0]), prior=np.array([3.0]))
        unconstrained = cmhe_solve_unconstrained(window, derived)
        bound = 0.5 * float(unconstrained.x_hat[0])
        boxes = BoxConstraints(
            state_lower={1: np.array([-np.inf])}, state_upper={1: np.array([bound])},
            disturbance_lower={1: np.array([-np.inf])},
            disturbance_upper={1: np.array([np.inf])})
        constrained = cmhe_solve_constrained(window, derived, boxes)
        assert constrained.x_hat[0] == pytest.approx(bound, abs=1e-10)
        # disturbance re-optimized on the clamped face: one-dimensional
        # quadratic in w with x fixed at the bound
        H = derived.kkt
        rhs = normal_equation_rhs(window, derived)
        w_face = (rhs[1] - H[1, 0] * bound) / H[1, 1]
        assert constrained.w_hat_window[0] == pytest.approx(w_face, abs=1e-8)

    def test_variational_inequality_on_random_directions(self, rng):
        model, _, _, derived = make_setup(rng, [2, 1], N=2)
        window = random_window(rng, derived)
        p = model.partition
        boxes = BoxConstraints(
            state_lower={i: np.full(p.state_sizes[i], -0.2) for i in p.ids},
            state_upper={i: np.full(p.state_sizes[i], 0.2) for i in p.ids},
            disturbance_lower={i: np.full(p.state_sizes[i], -0.1) for i in p.ids},
            disturbance_upper={i: np.full(p.state_sizes[i], 0.1) for i in p.ids})
        estimate = cmhe_solve_constrained(window, derived, boxes)
        z = estimate.stacked
        lower, upper = boxes.split_bounds(derived)
        assert np.all(z >= lower) and np.all(z <= upper)
        gradient = derived.kkt @ z - normal_equation_rhs(window, derived)
        for _ in range(1000):
            target = rng.uniform(lower, upper)
            direction = target - z
            assert gradient @ direction >= -1e-7

    def test_constrained_objective_not_below_unconstrained(self, rng):
        model, _, _, derived = make_setup(rng, [1, 1], N=2)
        window = random_window(rng, derived)
        p = model.partition
        boxes = BoxConstraints(
            state_lower={i: np.full(1, -0.05) for i in p.ids},
            state_upper={i: np.full(1, 0.05) for i in p.ids},
            disturbance_lower={i: np.full(1, -0.05) for i in p.ids},
            disturbance_upper={i: np.full(1, 0.05) for i in p.ids})
        unconstrained = cmhe_solve_unconstrained(window, derived)
        constrained = cmhe_solve_constrained(window, derived, boxes)
        assert constrained.objective_value >= unconstrained.objective_value - 1e-12

    def test_empty_box_rejected(self):
        with pytest.raises(EmptyBoxError):
            BoxConstraints(state_lower={1: np.array([1.0])},
                           state_upper={1: np.array([0.0])},
                           disturbance_lower={1: np.array([0.0])},
                           disturbance_upper={1: np.array([0.0])})

    def test_benchmark_physical_boxes_feasible(self, benchmark, benchmark_derived):
        from dmhe import benchmark_physical_boxes
        boxes = benchmark_physical_boxes(benchmark, disturbance_bound=0.1)
        window, _ = window_from_simulation(
            benchmark.model, benchmark_derived, (0.01, 0.01), seed=12,
            prior=benchmark.initial_guess_scaled)
        estimate = cmhe_solve_constrained(window, benchmark_derived, boxes)
        lower, upper = boxes.split_bounds(benchmark_derived)
        z = estimate.stacked
        assert np.all(z >= lower) and np.all(z <= upper)
