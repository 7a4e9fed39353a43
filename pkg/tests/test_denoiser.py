"""
Tests des débruiteurs (oracle, réseau convolutif, gradients)
"""
import numpy as np
import pytest

from core.errors import InvalidRangeError, ShapeMismatchError
from core.rng import RngStream
from engine.denoiser import ArchitectureDescriptor, ConstantDenoiser, ConvDenoiser, OracleDenoiser

FD_STEP = 1e-4
FD_RELATIVE = 1e-3
FD_FLOOR = 1e-8


def weighted_output(model: ConvDenoiser, z_t: np.ndarray, t: int, upstream: np.ndarray) -> float:
    return float(np.sum(upstream * model.predict(z_t, t)))


class TestOracle:
    def test_no_flips_on_target(self, random_bits):
        z = random_bits((4, 8, 8))
        oracle = OracleDenoiser(z, epsilon_clip=1e-6)
        np.testing.assert_allclose(oracle.predict(z, 10), 1e-6)

    def test_complement_flips_everything(self, random_bits):
        z = random_bits((4, 8, 8))
        oracle = OracleDenoiser(z, epsilon_clip=1e-6)
        np.testing.assert_allclose(oracle.predict(1 - z, 10), 1.0 - 1e-6)

    def test_shape_mismatch(self, random_bits):
        oracle = OracleDenoiser(random_bits((4, 8, 8)))
        with pytest.raises(ShapeMismatchError):
            oracle.predict(random_bits((4, 4, 4)), 1)


def test_constant_denoiser():
    assert np.all(ConstantDenoiser(0.5).predict(np.zeros((2, 3, 3), np.uint8), 4) == 0.5)


class TestConvDenoiser:
    def test_fresh_network_predicts_one_half(self, random_bits):
        architecture = ArchitectureDescriptor(latent_channels=4, width=8, blocks=2)
        model = ConvDenoiser.initialize(architecture, RngStream(0))
        np.testing.assert_array_equal(model.predict(random_bits((4, 8, 8)), 37), 0.5)

    def test_parameter_count_matches_layout(self, tiny_architecture, tiny_denoiser):
        assert tiny_architecture.parameter_count() == tiny_denoiser.params.size
        assert tiny_denoiser.params.size < 1000

    def test_outputs_stay_inside_open_interval(self, tiny_denoiser):
        for seed in range(5):
            stream = RngStream(seed)
            z = (stream.random((1, 8, 8)) < 0.5).astype(np.uint8)
            probs = tiny_denoiser.predict(z, int(stream.integers(1, 1000)))
            assert np.all((probs > 0.0) & (probs < 1.0))

    def test_even_kernel_is_rejected(self):
        with pytest.raises(InvalidRangeError):
            ConvDenoiser(ArchitectureDescriptor(kernel_size=4))

    def test_wrong_channel_count(self, tiny_denoiser, random_bits):
        with pytest.raises(ShapeMismatchError):
            tiny_denoiser.predict(random_bits((3, 8, 8)), 1)

    def test_batch_matches_single_predictions(self, tiny_denoiser, random_bits):
        batch = np.stack([random_bits((1, 6, 6), seed=s) for s in range(3)])
        times = np.array([1, 50, 999])
        probs = tiny_denoiser.predict_batch(batch, times)
        for index in range(3):
            np.testing.assert_allclose(probs[index], tiny_denoiser.predict(batch[index], times[index]))


class TestGradients:
    def test_zero_upstream_gives_zero_gradient(self, tiny_denoiser, random_bits):
        z = random_bits((1, 8, 8))
        _, grad = tiny_denoiser.predict_with_gradients(z, 5, np.zeros(z.shape))
        assert grad.shape == (tiny_denoiser.params.size,)
        assert not grad.any()

    def test_repeated_calls_are_bit_identical(self, tiny_denoiser, random_bits):
        z = random_bits((1, 8, 8))
        upstream = RngStream(3).random(z.shape)
        _, first = tiny_denoiser.predict_with_gradients(z, 5, upstream)
        _, second = tiny_denoiser.predict_with_gradients(z, 5, upstream)
        np.testing.assert_array_equal(first, second)

    def test_callable_upstream_matches_array(self, tiny_denoiser, random_bits):
        z = random_bits((1, 8, 8))
        upstream = RngStream(4).random(z.shape)
        _, direct = tiny_denoiser.predict_with_gradients(z, 9, upstream)
        _, deferred = tiny_denoiser.predict_with_gradients(z, 9, lambda probs: upstream)
        np.testing.assert_array_equal(direct, deferred)

    def test_upstream_shape_mismatch(self, tiny_denoiser, random_bits):
        with pytest.raises(ShapeMismatchError):
            tiny_denoiser.predict_with_gradients(random_bits((1, 8, 8)), 3, np.zeros((1, 4, 4)))

    @pytest.mark.parametrize("t", [1, 123, 1000])
    def test_matches_central_finite_differences(self, tiny_denoiser, random_bits, t):
        z = random_bits((1, 6, 6), seed=t)
        upstream = RngStream(t).uniform(-1.0, 1.0, size=z.shape)
        _, analytic = tiny_denoiser.predict_with_gradients(z, t, upstream)

        vector = tiny_denoiser.params.vector
        for index in range(vector.size):
            original = vector[index]
            vector[index] = original + FD_STEP
            plus = weighted_output(tiny_denoiser, z, t, upstream)
            vector[index] = original - FD_STEP
            minus = weighted_output(tiny_denoiser, z, t, upstream)
            vector[index] = original
            numeric = (plus - minus) / (2.0 * FD_STEP)
            scale = max(abs(numeric), abs(analytic[index]), FD_FLOOR)
            assert abs(numeric - analytic[index]) / scale <= FD_RELATIVE or (
                abs(numeric - analytic[index]) <= FD_FLOOR
            ), f"parameter {index}: analytic {analytic[index]}, numeric {numeric}"
