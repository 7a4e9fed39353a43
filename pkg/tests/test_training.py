"""
Tests de l'objectif BCE et de la boucle d'entraînement
"""
import numpy as np
import pytest
from pydantic import ValidationError

from core.errors import InvalidRangeError, ShapeMismatchError
from core.rng import RngStream
from engine.codec import BinarizeMode, encode_dataset
from engine.datagen import generate_healthy
from engine.denoiser import ArchitectureDescriptor, ConstantDenoiser, ConvDenoiser, OracleDenoiser
from engine.schedule import build_schedule
from engine.training import (
    Adam,
    OptimizerKind,
    SGD,
    TrainConfig,
    bce_gradient,
    bce_loss,
    diffusion_loss,
    train_diffusion,
)


class TestBce:
    def test_uniform_prediction_is_ln2(self, random_bits):
        target = random_bits((4, 8, 8))
        assert bce_loss(np.full(target.shape, 0.5), target) == pytest.approx(np.log(2.0), abs=1e-15)

    def test_single_entry(self):
        assert bce_loss(np.array([0.9]), np.array([1])) == pytest.approx(-np.log(0.9))

    def test_gradient_matches_finite_difference(self):
        pred = np.array([0.2, 0.7, 0.4])
        target = np.array([0, 1, 1])
        analytic = bce_gradient(pred, target)
        for index in range(pred.size):
            step = np.zeros_like(pred)
            step[index] = 1e-6
            numeric = (bce_loss(pred + step, target) - bce_loss(pred - step, target)) / 2e-6
            assert analytic[index] == pytest.approx(numeric, rel=1e-6)


class TestDiffusionLoss:
    def test_constant_half_gives_ln2(self, short_schedule, random_bits):
        loss, grad = diffusion_loss(ConstantDenoiser(0.5), random_bits((4, 8, 8)), 20, short_schedule, RngStream(1))
        assert loss == pytest.approx(np.log(2.0))
        assert grad.size == 0

    def test_oracle_loss_is_clipping_floor(self, short_schedule, random_bits):
        z0 = random_bits((4, 8, 8))
        loss, _ = diffusion_loss(OracleDenoiser(z0, 1e-6), z0, 30, short_schedule, RngStream(2))
        assert loss == pytest.approx(-np.log(1.0 - 1e-6), rel=1e-6)

    def test_fresh_network_gradient_shape(self, tiny_denoiser, short_schedule, random_bits):
        loss, grad = diffusion_loss(tiny_denoiser, random_bits((1, 8, 8)), 10, short_schedule, RngStream(3))
        assert loss > 0.0
        assert grad.shape == (tiny_denoiser.params.size,)


class TestOptimizers:
    def test_sgd_step(self):
        params = np.array([1.0, -2.0])
        SGD(0.1).step(params, np.array([1.0, 1.0]))
        np.testing.assert_allclose(params, [0.9, -2.1])

    def test_adam_first_step_moves_by_learning_rate(self):
        params = np.zeros(3)
        Adam(3, 0.01, 0.9, 0.999, 1e-8).step(params, np.array([2.0, -0.5, 1e-3]))
        np.testing.assert_allclose(params, [-0.01, 0.01, -0.01], rtol=1e-4)


class TestTrainDiffusion:
    def test_iterations_must_be_positive(self):
        with pytest.raises(ValidationError):
            TrainConfig(iterations=0)

    def test_single_iteration_changes_parameters(self, tiny_architecture, short_schedule, random_bits):
        model = ConvDenoiser.initialize(tiny_architecture, RngStream(0))
        before = model.params.vector.copy()
        dataset = [random_bits((1, 8, 8), seed=s) for s in range(4)]
        result = train_diffusion(dataset, model, short_schedule, TrainConfig(iterations=1, batch_size=2))
        assert len(result.loss_history) == 1
        assert not np.array_equal(before, result.model.params.vector)

    def test_same_seed_same_history(self, tiny_architecture, short_schedule, random_bits):
        dataset = [random_bits((1, 8, 8), seed=s) for s in range(4)]
        config = TrainConfig(iterations=5, batch_size=3, learning_rate=1e-2, seed=17)
        histories = []
        for _ in range(2):
            model = ConvDenoiser.initialize(tiny_architecture, RngStream(0))
            histories.append(train_diffusion(dataset, model, short_schedule, config).loss_history)
        assert histories[0] == histories[1]

    def test_callbacks(self, tiny_architecture, short_schedule, random_bits, mocker):
        dataset = [random_bits((1, 8, 8), seed=s) for s in range(2)]
        on_iteration, on_checkpoint = mocker.Mock(), mocker.Mock()
        config = TrainConfig(iterations=4, batch_size=2, checkpoint_every=2, optimizer=OptimizerKind.SGD)
        train_diffusion(
            dataset,
            ConvDenoiser.initialize(tiny_architecture, RngStream(0)),
            short_schedule,
            config,
            on_iteration=on_iteration,
            on_checkpoint=on_checkpoint,
        )
        assert [c.args[0] for c in on_iteration.call_args_list] == [1, 2, 3, 4]
        assert all(np.isfinite(c.args[1]) for c in on_iteration.call_args_list)
        assert [c.args[0] for c in on_checkpoint.call_args_list] == [2, 4]
        assert all(isinstance(c.args[1], ConvDenoiser) for c in on_checkpoint.call_args_list)

    def test_empty_dataset(self, tiny_denoiser, short_schedule):
        with pytest.raises(InvalidRangeError):
            train_diffusion([], tiny_denoiser, short_schedule, TrainConfig(iterations=1))

    def test_inconsistent_shapes(self, tiny_denoiser, short_schedule, random_bits):
        with pytest.raises(ShapeMismatchError):
            train_diffusion(
                [random_bits((1, 8, 8)), random_bits((1, 4, 4))],
                tiny_denoiser,
                short_schedule,
                TrainConfig(iterations=1),
            )

    @pytest.mark.slow
    def test_loss_decreases_on_phantom_codes(self, bitplane_codec, small_phantoms):
        spec = small_phantoms.model_copy(update={"size": 64})
        images = generate_healthy(spec, 64, seed=0)
        codes = encode_dataset(bitplane_codec, images, BinarizeMode.THRESHOLD, seed=0)
        assert codes[0].shape == (4, 16, 16)

        schedule = build_schedule("linear", T=1000)
        architecture = ArchitectureDescriptor(latent_channels=4, width=16, blocks=2)
        model = ConvDenoiser.initialize(architecture, RngStream(0))
        config = TrainConfig(iterations=500, batch_size=8, learning_rate=2e-3, seed=0)
        history = train_diffusion(codes, model, schedule, config).loss_history

        assert np.mean(history[-100:]) < 0.9 * np.mean(history[:100])
