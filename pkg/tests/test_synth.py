"""Tests for synthetic density models and the rejection sampler"""
import math
import pickle

import numpy as np
import pytest

from hauslev.exceptions import DomainError, ModelConstructionError
from hauslev.services.grid import hausdorff
from hauslev.services.synth import (
    boundary_distance,
    check_assumptions,
    density_at,
    empirical_cell_masses,
    make_model,
    sample,
    true_level_set,
)

# Smallest a with 0.4 + 0.046875 a + 0.64 / a = 1 (integral of the alpha = 1 interval model)
INTERVAL_AMPLITUDE = (0.6 + math.sqrt(0.24)) / 0.09375


class TestIntervalModel:
    def test_amplitude_and_cap(self, interval_model):
        assert interval_model.r_cap == 0.125
        assert interval_model.amplitude == pytest.approx(INTERVAL_AMPLITUDE, rel=1e-6)
        assert interval_model.f_max == pytest.approx(0.8 + 0.125 * INTERVAL_AMPLITUDE, rel=1e-6)
        assert abs(interval_model.normalization_residual) < 1e-9

    @pytest.mark.parametrize("x", [0.25, 0.75])
    def test_boundary_sits_at_level(self, interval_model, x):
        assert density_at(interval_model, [x]) == pytest.approx(0.8, abs=1e-12)
        assert boundary_distance(interval_model, [x]) == pytest.approx(0.0, abs=1e-15)

    def test_midpoint(self, interval_model):
        assert density_at(interval_model, [0.5]) == pytest.approx(0.8 + interval_model.amplitude * 0.125)
        assert boundary_distance(interval_model, [0.5]) == 0.25

    def test_slope_at_boundary(self, interval_model):
        a = interval_model.amplitude
        assert density_at(interval_model, [0.27]) == pytest.approx(0.8 + 0.02 * a)
        assert density_at(interval_model, [0.23]) == pytest.approx(0.8 - 0.02 * a)

    def test_clipped_at_zero_far_outside(self, interval_model):
        assert density_at(interval_model, [0.0]) == 0.0
        assert density_at(interval_model, [1.0]) == 0.0

    def test_point_outside_domain(self, interval_model):
        with pytest.raises(DomainError):
            density_at(interval_model, [1.5])

    def test_true_level_set(self, interval_model):
        assert true_level_set(interval_model, 2).members == {(1,), (2,)}
        assert true_level_set(interval_model, 0).members == {(0,)}

    def test_cell_masses_sum_to_one(self, interval_model):
        for j in (0, 3, 7):
            assert float(np.sum(interval_model.cell_masses(j))) == pytest.approx(1.0, abs=1e-8)

    def test_assumptions_hold_on_grid(self, interval_model):
        check = check_assumptions(interval_model)
        assert check.a1_passed
        assert check.a2_passed
        assert check.a1_points > 0
        assert not check.vacuous

    def test_survives_pickling(self, interval_model):
        restored = pickle.loads(pickle.dumps(interval_model))
        x = np.linspace(0, 1, 33).reshape(-1, 1)
        assert np.array_equal(restored.density(x), interval_model.density(x))


class TestJumpModel:
    def test_two_level_step(self, jump_model):
        assert jump_model.amplitude == pytest.approx(1.2, rel=1e-9)
        assert density_at(jump_model, [0.5]) == pytest.approx(2.0)
        assert density_at(jump_model, [0.1]) == 0.0
        assert density_at(jump_model, [0.9]) == 0.0

    def test_cell_averages(self, jump_model):
        assert jump_model.cell_averages(2) == pytest.approx(np.array([0.0, 2.0, 2.0, 0.0]), abs=1e-9)

    def test_level_set_exact(self, jump_model):
        assert true_level_set(jump_model, 3).members == {(2,), (3,), (4,), (5,)}

    def test_outer_step_clipped_at_zero(self, jump_model):
        # [0.25, 0.75] at gamma = 0.8 only normalizes once gamma - a < 0
        assert jump_model.amplitude == pytest.approx(1.2, rel=1e-9)
        assert density_at(jump_model, [0.1]) == 0.0
        assert density_at(jump_model, [0.5]) == pytest.approx(2.0, rel=1e-9)
        assert jump_model.constants.c1 == pytest.approx(0.8)
        assert jump_model.constants.c2 == pytest.approx(1.2, rel=1e-9)

    def test_sampled_mass_of_level_set(self):
        model = make_model(d=1, gamma=0.8, alpha=0.0, shape="interval", radius=0.4)
        a = model.amplitude
        inside, outside = 0.8 * (0.8 + a), 0.2 * (0.8 - a)
        p = inside / (inside + outside)
        samples = sample(model, 100_000, seed=11)
        share = float(np.mean(model.level_mask(samples.points)))
        assert abs(share - p) <= 3 * math.sqrt(p * (1 - p) / samples.n)


class TestOtherShapes:
    @pytest.fixture(scope="class")
    def ball(self):
        return make_model(d=2, gamma=0.8, alpha=2.0, shape="ball", center=[0.5, 0.5], radius=0.3)

    def test_ball_is_radially_symmetric(self, ball):
        assert density_at(ball, [0.6, 0.5]) == pytest.approx(density_at(ball, [0.5, 0.6]))
        assert density_at(ball, [0.5, 0.2]) == pytest.approx(0.8, abs=1e-12)
        assert boundary_distance(ball, [0.5, 0.5]) == pytest.approx(0.3)
        assert abs(ball.normalization_residual) < 1e-9

    @pytest.mark.parametrize("alpha", [1.0, 2.0])
    def test_ball_meets_regularity_bounds(self, alpha):
        model = make_model(d=2, gamma=0.8, alpha=alpha, shape="ball", center=[0.5, 0.5], radius=0.3)
        check = check_assumptions(model)
        assert check.a1_points > 0 and check.a2_points > 0
        assert check.a1_passed
        assert check.a2_passed
        assert not check.vacuous

    @pytest.mark.parametrize("j", range(3, 7))
    def test_rasters_converge(self, interval_model, ball, j):
        for model in (interval_model, ball):
            coarse, fine = true_level_set(model, j), true_level_set(model, j + 1)
            assert hausdorff(coarse, fine) <= math.sqrt(model.d) * 2.0 ** -j

    def test_two_components(self):
        model = make_model(d=1, gamma=0.8, alpha=1.0, shape="two-component")
        assert true_level_set(model, 3).members == {(1,), (6,)}
        assert model.constants.epsilon_o == pytest.approx(0.1)

    def test_ribbon(self):
        model = make_model(d=2, gamma=0.8, alpha=1.0, shape="ribbon")
        assert model.constants.epsilon_o == pytest.approx(1 / 128)
        assert density_at(model, [0.5, 0.1]) > 0.8

    def test_uniform(self, uniform_model):
        assert density_at(uniform_model, [0.3]) == 1.0
        assert np.allclose(uniform_model.cell_averages(4), 1.0)
        assert check_assumptions(uniform_model).vacuous

    @pytest.mark.parametrize("kwargs", [
        dict(d=1, gamma=2.5, alpha=1.0, shape="interval"),
        dict(d=2, gamma=0.8, alpha=1.0, shape="interval"),
        dict(d=2, gamma=0.8, alpha=1.0, shape="ball", center=[0.1, 0.5], radius=0.25),
        dict(d=1, gamma=0.8, alpha=1.0, shape="two-component", center=[0.3, 0.5], radius=0.1),
    ])
    def test_inadmissible_models(self, kwargs):
        with pytest.raises(ModelConstructionError):
            make_model(**kwargs)


class TestSampling:
    def test_deterministic(self, interval_model):
        first = sample(interval_model, 500, seed=7)
        second = sample(interval_model, 500, seed=7)
        assert np.array_equal(first.points, second.points)
        assert first.acceptance_rate == second.acceptance_rate

    def test_seed_changes_draws(self, interval_model):
        assert not np.array_equal(sample(interval_model, 50, 1).points, sample(interval_model, 50, 2).points)

    def test_points_in_domain(self, interval_model):
        samples = sample(interval_model, 2000, seed=3)
        assert samples.points.shape == (2000, 1)
        assert samples.points.min() >= 0.0 and samples.points.max() <= 1.0

    def test_uniform_accepts_everything(self, uniform_model):
        assert sample(uniform_model, 1000, seed=0).acceptance_rate == 1.0

    def test_acceptance_near_inverse_peak(self, interval_model):
        samples = sample(interval_model, 20_000, seed=5)
        assert samples.acceptance_rate == pytest.approx(1 / interval_model.f_max, rel=0.05)

    def test_rejects_empty_request(self, interval_model):
        with pytest.raises(DomainError):
            sample(interval_model, 0, seed=0)

    @pytest.mark.parametrize("n", [2000, 50_000])
    def test_cell_masses_converge(self, interval_model, n):
        truth = interval_model.cell_masses(3)
        observed = empirical_cell_masses(sample(interval_model, n, seed=n), 3)
        band = 5 * np.sqrt(truth * (1 - truth) / n) + 1e-12
        assert np.all(np.abs(observed - truth) <= band)
