"""
Tests du processus de Bernoulli (bruitage, postérieur, échantillonnage)
"""
import itertools

import numpy as np
import pytest

from core.errors import (
    DegeneratePosteriorError,
    InvalidPredictionError,
    InvalidProbabilityError,
    ShapeMismatchError,
    TimestepOutOfRangeError,
)
from core.rng import RngStream
from engine.denoiser import ConstantDenoiser, OracleDenoiser
from engine.diffusion import (
    bernoulli_sample,
    checked_prediction,
    forward_jump,
    forward_step,
    generate,
    posterior_theta,
    predict_z0,
    sample_step,
)
from engine.schedule import NoiseSchedule, build_schedule

N = 100_000


def three_sigma(p: float, n: int = N) -> float:
    return 3.0 * np.sqrt(p * (1.0 - p) / n)


def brute_force_posterior(z_t: int, z0: float, beta: float, alpha_bar_prev: float) -> float:
    """P(z_{t-1} = 1 | z_t, z_0) par énumération de z_{t-1}"""
    def bern(value: int, p: float) -> float:
        return p if value == 1 else 1.0 - p

    weights = {}
    for previous in (0, 1):
        likelihood = bern(z_t, (1.0 - beta) * previous + beta / 2.0)
        prior = bern(previous, alpha_bar_prev * z0 + (1.0 - alpha_bar_prev) / 2.0)
        weights[previous] = likelihood * prior
    return weights[1] / (weights[0] + weights[1])


class TestBernoulliSample:
    def test_degenerate_probabilities(self, rng):
        assert not bernoulli_sample(np.zeros((8, 8)), rng).any()
        assert bernoulli_sample(np.ones((8, 8)), rng).all()

    def test_half_probability_mean(self, rng):
        sample = bernoulli_sample(np.full(N, 0.5), rng)
        assert abs(sample.mean() - 0.5) <= three_sigma(0.5)

    def test_nan_is_rejected(self, rng):
        with pytest.raises(InvalidProbabilityError):
            bernoulli_sample(np.array([0.2, np.nan]), rng)

    def test_out_of_range_is_rejected(self, rng):
        with pytest.raises(InvalidProbabilityError):
            bernoulli_sample(np.array([1.2]), rng)


class TestForward:
    def test_noiseless_step_is_identity(self, rng, random_bits):
        schedule = NoiseSchedule.from_betas(np.array([0.0]))
        z = random_bits((4, 8, 8))
        np.testing.assert_array_equal(forward_step(z, 1, schedule, rng), z)

    def test_full_noise_step_is_uniform(self, rng):
        schedule = NoiseSchedule.from_betas(np.array([1.0]))
        for z in (np.zeros(N, np.uint8), np.ones(N, np.uint8)):
            assert abs(forward_step(z, 1, schedule, rng).mean() - 0.5) <= three_sigma(0.5)

    def test_step_rate(self, rng):
        schedule = NoiseSchedule.from_betas(np.array([0.2]))
        ones = forward_step(np.ones(N, np.uint8), 1, schedule, rng)
        assert abs(ones.mean() - 0.9) <= three_sigma(0.9)

    def test_jump_rate(self, rng):
        schedule = NoiseSchedule.from_betas(np.array([0.2, 0.4]))
        assert schedule.flip_probability(2) == pytest.approx(0.26)
        noisy = forward_jump(np.zeros(N, np.uint8), 2, schedule, rng)
        assert abs(noisy.mean() - 0.26) <= three_sigma(0.26)

    def test_jump_first_step_flips_half_beta(self, rng):
        schedule = NoiseSchedule.from_betas(np.array([0.01, 0.02]))
        z0 = np.ones(N, np.uint8)
        flipped = np.mean(forward_jump(z0, 1, schedule, rng) != z0)
        assert abs(flipped - 0.005) <= three_sigma(0.005)

    @pytest.mark.parametrize("t", [1, 500, 1000])
    def test_flip_rate_on_standard_schedule(self, rng, t):
        schedule = build_schedule("linear", T=1000)
        z0 = np.zeros(N, np.uint8)
        expected = schedule.flip_probability(t)
        assert expected == pytest.approx((1.0 - schedule.alpha_bar_at(t)) / 2.0)
        assert abs(forward_jump(z0, t, schedule, rng).mean() - expected) <= three_sigma(expected)

    def test_chained_steps_match_jump(self, rng):
        schedule = build_schedule("linear", T=20, beta_start=0.01, beta_end=0.1)
        for start in (0, 1):
            z0 = np.full(N, start, np.uint8)
            chained = z0
            for s in range(1, schedule.T + 1):
                chained = forward_step(chained, s, schedule, rng)
            jumped = forward_jump(z0, schedule.T, schedule, rng)
            expected = schedule.flip_probability(schedule.T)
            chained_rate = np.mean(chained != z0)
            jumped_rate = np.mean(jumped != z0)
            assert abs(chained_rate - expected) <= three_sigma(expected)
            assert abs(jumped_rate - expected) <= three_sigma(expected)
            # deux estimateurs indépendants: variance doublée
            assert abs(chained_rate - jumped_rate) <= np.sqrt(2.0) * three_sigma(expected)

    def test_non_binary_input_is_rejected(self, rng):
        schedule = NoiseSchedule.from_betas(np.array([0.1]))
        with pytest.raises(InvalidProbabilityError):
            forward_jump(np.array([0, 2]), 1, schedule, rng)

    def test_timestep_range(self, rng):
        schedule = NoiseSchedule.from_betas(np.array([0.1]))
        with pytest.raises(TimestepOutOfRangeError):
            forward_step(np.zeros(4, np.uint8), 2, schedule, rng)


class TestPosterior:
    def test_hand_evaluated_value(self):
        schedule = NoiseSchedule.from_betas(np.array([0.2, 0.1]))
        theta = posterior_theta(np.array([1]), np.array([1.0]), 2, schedule)
        assert theta[0] == pytest.approx(0.855 / 0.860, rel=1e-12)

    @pytest.mark.parametrize("betas", [(0.2, 0.1), (0.05, 0.3), (0.5, 0.9), (1e-4, 0.02)])
    def test_matches_brute_force_enumeration(self, betas):
        schedule = NoiseSchedule.from_betas(np.array(betas))
        for z_t, z0 in itertools.product((0, 1), (0.0, 0.25, 0.5, 1.0)):
            theta = posterior_theta(np.array([z_t]), np.array([z0]), 2, schedule)[0]
            expected = brute_force_posterior(z_t, z0, betas[1], schedule.alpha_bar_at(1))
            assert theta == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_enumeration_at_every_step_of_random_schedules(self, seed):
        betas = RngStream(seed).uniform(1e-3, 0.6, size=6)
        schedule = NoiseSchedule.from_betas(betas)
        estimates = np.array([0.0, 0.1, 0.5, 0.9, 1.0])
        for t in range(2, schedule.T + 1):
            for z_t in (0, 1):
                theta = posterior_theta(np.full(estimates.shape, z_t, np.uint8), estimates, t, schedule)
                expected = [
                    brute_force_posterior(z_t, z0, schedule.beta_at(t), schedule.alpha_bar_at(t - 1))
                    for z0 in estimates
                ]
                np.testing.assert_allclose(theta, expected, atol=1e-12)

    def test_noiseless_step_pins_current_state(self, random_bits):
        schedule = NoiseSchedule.from_betas(np.array([0.3, 0.0]))
        z_t = random_bits((3, 5, 5), seed=1)
        z0 = RngStream(2).random((3, 5, 5))
        np.testing.assert_allclose(posterior_theta(z_t, z0, 2, schedule), z_t)

    def test_first_step_returns_estimate(self, random_bits):
        schedule = NoiseSchedule.from_betas(np.array([0.3, 0.2]))
        z0 = random_bits((2, 4, 4), seed=3)
        theta = posterior_theta(random_bits((2, 4, 4), seed=4), z0, 1, schedule)
        np.testing.assert_array_equal(theta, z0)

    def test_degenerate_normalizer(self):
        schedule = NoiseSchedule.from_betas(np.array([0.0, 0.0]))
        with pytest.raises(DegeneratePosteriorError) as info:
            posterior_theta(np.array([1, 0]), np.array([0.0, 0.0]), 2, schedule)
        assert info.value.indices == [(0,)]

    def test_shape_mismatch(self):
        schedule = NoiseSchedule.from_betas(np.array([0.2, 0.1]))
        with pytest.raises(ShapeMismatchError):
            posterior_theta(np.zeros((2, 2), np.uint8), np.zeros((2, 3)), 2, schedule)


class TestSampleStep:
    def test_noiseless_step(self, rng, random_bits):
        schedule = NoiseSchedule.from_betas(np.array([0.2, 0.0]))
        z_t = random_bits((4, 6, 6))
        np.testing.assert_array_equal(sample_step(z_t, np.full(z_t.shape, 0.3), 2, schedule, rng), z_t)

    def test_first_step_with_binary_estimate(self, rng, random_bits):
        schedule = NoiseSchedule.from_betas(np.array([0.2, 0.1]))
        z0 = random_bits((4, 6, 6), seed=5)
        np.testing.assert_array_equal(sample_step(random_bits((4, 6, 6)), z0, 1, schedule, rng), z0)

    def test_empirical_rate_matches_posterior(self, rng):
        schedule = NoiseSchedule.from_betas(np.array([0.2, 0.1]))
        samples = sample_step(np.ones(N, np.uint8), np.ones(N), 2, schedule, rng)
        expected = 0.855 / 0.860
        assert abs(samples.mean() - expected) <= three_sigma(expected)


class TestGenerate:
    def test_constant_zero_denoiser_is_a_posterior_walk(self, short_schedule):
        z = generate(ConstantDenoiser(0.0), (2, 4, 4), short_schedule, RngStream(3))
        assert z.shape == (2, 4, 4)
        assert set(np.unique(z)) <= {0, 1}

    def test_oracle_recovers_its_target(self, short_schedule, random_bits):
        target = random_bits((2, 4, 4), seed=9)
        z = generate(OracleDenoiser(target), target.shape, short_schedule, RngStream(11))
        np.testing.assert_array_equal(z, target)

    def test_same_seed_is_bit_identical(self, short_schedule):
        first = generate(ConstantDenoiser(0.3), (1, 8, 8), short_schedule, RngStream(5))
        second = generate(ConstantDenoiser(0.3), (1, 8, 8), short_schedule, RngStream(5))
        np.testing.assert_array_equal(first, second)

    def test_invalid_prediction_is_rejected(self, short_schedule):
        with pytest.raises(InvalidPredictionError):
            checked_prediction(ConstantDenoiser(1.5), np.zeros((1, 2, 2), np.uint8), 3)


def test_predict_z0_inverts_flips():
    z_t = np.array([0, 1, 1, 0], dtype=np.uint8)
    np.testing.assert_allclose(predict_z0(z_t, np.array([0.0, 0.0, 1.0, 1.0])), [0, 1, 0, 1])
