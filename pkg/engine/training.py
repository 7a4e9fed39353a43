"""
Training Module
Objectif BCE sur les probabilités d'inversion et boucle d'entraînement
stochastique sur des codes latents sains
"""
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from core.errors import InvalidRangeError, ShapeMismatchError
from core.rng import RngStream
from engine.denoiser import ConvDenoiser, Denoiser
from engine.diffusion import as_bits, forward_jump
from engine.schedule import NoiseSchedule

IterationCallback = Callable[[int, float], None]
CheckpointCallback = Callable[[int, object], None]


class OptimizerKind(str, Enum):
    """Optimiseurs disponibles"""
    ADAM = "adam"
    SGD = "sgd"


class TrainConfig(BaseModel):
    """Hyperparamètres d'entraînement"""
    learning_rate: float = Field(default=1e-4, gt=0.0)
    batch_size: int = Field(default=32, ge=1)
    iterations: int = Field(default=1000, ge=1)
    optimizer: OptimizerKind = OptimizerKind.ADAM
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    checkpoint_every: int = Field(default=0, ge=0)


class TrainingResult(BaseModel):
    """Modèle entraîné et historique des pertes"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    model: object
    loss_history: List[float] = Field(default_factory=list)


class SGD:
    """Descente de gradient: θ ← θ - η·g"""

    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        params -= self.learning_rate * grad


class Adam:
    """Adam avec correction de biais, mise à jour en place"""

    def __init__(self, size: int, learning_rate: float, beta1: float, beta2: float, epsilon: float):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.steps = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.steps += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.steps)
        v_hat = self.v / (1.0 - self.beta2 ** self.steps)
        params -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


def make_optimizer(config: TrainConfig, size: int):
    if config.optimizer == OptimizerKind.SGD:
        return SGD(config.learning_rate)
    return Adam(size, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_epsilon)


def bce_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Entropie croisée binaire moyenne sur toutes les entrées"""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    return float(np.mean(-(target * np.log(pred) + (1.0 - target) * np.log1p(-pred))))


def bce_gradient(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """∂ bce_loss / ∂ pred"""
    pred = np.asarray(pred, dtype=np.float64)
    return (pred - target) / (pred * (1.0 - pred) * pred.size)


def _noised_item(
    z0: np.ndarray, schedule: NoiseSchedule, rng: RngStream, t: Optional[int] = None
) -> Tuple[int, np.ndarray, np.ndarray]:
    """Tire t (si absent) puis z_t; renvoie (t, z_t, cible z_t ⊕ z_0)"""
    if t is None:
        t = int(rng.integers(1, schedule.T + 1))
    z_t = forward_jump(z0, t, schedule, rng)
    return t, z_t, np.bitwise_xor(z_t, z0)


def diffusion_loss(
    denoiser: Denoiser,
    z0: np.ndarray,
    t: int,
    schedule: NoiseSchedule,
    rng: RngStream,
) -> Tuple[float, np.ndarray]:
    """
    Perte BCE(ε_θ(z_t, t), z_t ⊕ z_0) pour un code latent

    Args:
        denoiser: débruiteur (gradient vide s'il n'a pas de paramètres)
        z0: code latent propre
        t: pas de temps
        schedule: planning de bruit
        rng: flux pour tirer z_t

    Returns:
        (perte moyenne, gradient des paramètres)
    """
    _, z_t, target = _noised_item(as_bits(z0), schedule, rng, t)
    if isinstance(denoiser, ConvDenoiser):
        probs, grad = denoiser.predict_with_gradients(
            z_t, t, lambda output: bce_gradient(output, target)
        )
        return bce_loss(probs, target), grad
    probs = denoiser.predict(z_t, t)
    return bce_loss(probs, target), np.zeros(0)


def _stack_dataset(dataset: Sequence[np.ndarray]) -> np.ndarray:
    if len(dataset) == 0:
        raise InvalidRangeError("training dataset is empty")
    shape = np.shape(dataset[0])
    for index, item in enumerate(dataset):
        if np.shape(item) != shape:
            raise ShapeMismatchError(shape, np.shape(item), f"dataset item {index}")
    return np.stack([as_bits(item) for item in dataset])


def train_diffusion(
    dataset: Sequence[np.ndarray],
    denoiser: ConvDenoiser,
    schedule: NoiseSchedule,
    config: TrainConfig,
    on_iteration: Optional[IterationCallback] = None,
    on_checkpoint: Optional[CheckpointCallback] = None,
) -> TrainingResult:
    """
    Entraîne le débruiteur sur des codes latents sains

    Chaque itération tire un lot (avec remise), un t uniforme par élément
    sur un flux dérivé de (itération, élément), moyenne les gradients
    et fait un pas d'optimiseur.

    Returns:
        TrainingResult: débruiteur entraîné + historique des pertes
    """
    codes = _stack_dataset(dataset)
    optimizer = make_optimizer(config, denoiser.params.size)
    root = RngStream(config.seed).derive("train-diffusion")
    history: List[float] = []

    for iteration in range(config.iterations):
        iteration_rng = root.derive(iteration)
        indices = iteration_rng.integers(0, len(codes), size=config.batch_size)

        times = np.empty(config.batch_size, dtype=np.int64)
        noisy = np.empty((config.batch_size,) + codes.shape[1:], dtype=np.uint8)
        targets = np.empty_like(noisy)
        for slot, index in enumerate(indices):
            times[slot], noisy[slot], targets[slot] = _noised_item(
                codes[index], schedule, iteration_rng.derive(slot)
            )

        probs, grad = denoiser.predict_batch_with_gradients(
            noisy, times, lambda output: bce_gradient(output, targets)
        )
        loss = bce_loss(probs, targets)

        optimizer.step(denoiser.params.vector, grad)
        history.append(loss)

        if on_iteration is not None:
            on_iteration(iteration + 1, loss)
        if on_checkpoint is not None and config.checkpoint_every and (iteration + 1) % config.checkpoint_every == 0:
            on_checkpoint(iteration + 1, denoiser)

    return TrainingResult(model=denoiser, loss_history=history)
