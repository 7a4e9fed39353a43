"""
Diffusion Module
Cœur du processus de Bernoulli: bruitage (pas à pas et saut direct),
postérieur exact θ_post et échantillonnage ancestral
"""
from typing import TYPE_CHECKING, Sequence

import numpy as np

from core.errors import (
    DegeneratePosteriorError,
    InvalidPredictionError,
    InvalidProbabilityError,
    ShapeMismatchError,
    TimestepOutOfRangeError,
)
from core.rng import RngStream
from engine.schedule import NoiseSchedule

if TYPE_CHECKING:
    from engine.denoiser import Denoiser

BIT_DTYPE = np.uint8
# plus petit normalisateur accepté avant de déclarer le postérieur dégénéré
POSTERIOR_FLOOR = 1e-300


def as_bits(z: np.ndarray) -> np.ndarray:
    """Valide un BitTensor (valeurs exactement 0 ou 1) et le convertit en uint8"""
    array = np.asarray(z)
    if array.dtype == np.bool_:
        return array.astype(BIT_DTYPE)
    if not np.all((array == 0) | (array == 1)):
        raise InvalidProbabilityError("bit tensor must contain only 0 and 1")
    return array.astype(BIT_DTYPE, copy=False)


def as_probs(p: np.ndarray, what: str = "probability tensor") -> np.ndarray:
    """Valide un ProbTensor (valeurs dans [0, 1], sans NaN)"""
    array = np.asarray(p, dtype=np.float64)
    if np.isnan(array).any():
        raise InvalidProbabilityError(f"{what} contains NaN")
    if np.any(array < 0.0) or np.any(array > 1.0):
        raise InvalidProbabilityError(f"{what} has entries outside [0, 1]")
    return array


def _check_t(t: int, schedule: NoiseSchedule) -> None:
    if not 1 <= t <= schedule.T:
        raise TimestepOutOfRangeError(t, schedule.T)


def bernoulli_sample(p: np.ndarray, rng: RngStream) -> np.ndarray:
    """
    Tire chaque entrée indépendamment selon B(p)

    Args:
        p: probabilités dans [0, 1]
        rng: flux aléatoire

    Returns:
        np.ndarray: BitTensor de même forme que p
    """
    probs = as_probs(p)
    return (rng.random(probs.shape) < probs).astype(BIT_DTYPE)


def forward_step(z_prev: np.ndarray, t: int, schedule: NoiseSchedule, rng: RngStream) -> np.ndarray:
    """Un pas q(z_t | z_{t-1}) = B((1-β_t) z_{t-1} + β_t/2)"""
    _check_t(t, schedule)
    bits = as_bits(z_prev)
    beta = schedule.beta_at(t)
    return bernoulli_sample((1.0 - beta) * bits + 0.5 * beta, rng)


def forward_jump(z0: np.ndarray, t: int, schedule: NoiseSchedule, rng: RngStream) -> np.ndarray:
    """Saut direct z_t = z_0 ⊕ ε, ε ~ B((1 - ᾱ_t)/2)"""
    _check_t(t, schedule)
    bits = as_bits(z0)
    noise = bernoulli_sample(np.full(bits.shape, schedule.flip_probability(t)), rng)
    return np.bitwise_xor(bits, noise)


def posterior_theta(
    z_t: np.ndarray,
    z0_est: np.ndarray,
    t: int,
    schedule: NoiseSchedule,
) -> np.ndarray:
    """
    Paramètre du postérieur q(z_{t-1} | z_t, z_0)

    Le prior utilise ᾱ_{t-1} (règle de Bayes); z0_est peut être réel
    puisque l'expression est linéaire en z_0. À t = 1, ᾱ_0 = 1 et le
    postérieur se réduit à z0_est.

    Args:
        z_t: BitTensor courant
        z0_est: estimation de z_0 (bits ou probabilités)
        t: pas de temps dans [1, T]
        schedule: planning de bruit

    Returns:
        np.ndarray: θ_post dans [0, 1]
    """
    _check_t(t, schedule)
    bits = as_bits(z_t).astype(np.float64)
    z0 = as_probs(z0_est, "z0 estimate")
    if z0.shape != bits.shape:
        raise ShapeMismatchError(bits.shape, z0.shape, "z0 estimate")

    if t == 1:
        return z0.copy()

    beta = schedule.beta_at(t)
    alpha_bar_prev = schedule.alpha_bar_at(t - 1)
    prior_noise = 0.5 * (1.0 - alpha_bar_prev)

    num1 = ((1.0 - beta) * bits + 0.5 * beta) * (alpha_bar_prev * z0 + prior_noise)
    num0 = ((1.0 - beta) * (1.0 - bits) + 0.5 * beta) * (alpha_bar_prev * (1.0 - z0) + prior_noise)
    normalizer = num1 + num0

    degenerate = normalizer < np.finfo(np.float64).tiny
    if degenerate.any():
        raise DegeneratePosteriorError(np.argwhere(degenerate), t)

    theta = num1 / np.maximum(normalizer, POSTERIOR_FLOOR)
    return np.clip(theta, 0.0, 1.0)


def sample_step(
    z_t: np.ndarray,
    z0_est: np.ndarray,
    t: int,
    schedule: NoiseSchedule,
    rng: RngStream,
) -> np.ndarray:
    """z_{t-1} ~ B(θ_post(z_t, z0_est))"""
    return bernoulli_sample(posterior_theta(z_t, z0_est, t, schedule), rng)


def predict_z0(z_t: np.ndarray, flip_probs: np.ndarray) -> np.ndarray:
    """Estimation z̃_0 = |z_t - ε_θ(z_t, t)|"""
    return np.abs(z_t.astype(np.float64) - flip_probs)


def checked_prediction(denoiser: "Denoiser", z_t: np.ndarray, t: int) -> np.ndarray:
    """Appelle le débruiteur et vérifie que la sortie est dans [0, 1]"""
    eps = np.asarray(denoiser.predict(z_t, t), dtype=np.float64)
    if eps.shape != z_t.shape:
        raise ShapeMismatchError(z_t.shape, eps.shape, "denoiser output")
    if np.isnan(eps).any() or np.any(eps < 0.0) or np.any(eps > 1.0):
        raise InvalidPredictionError(f"denoiser output outside [0, 1] at t={t}")
    return eps


def generate(
    denoiser: "Denoiser",
    shape: Sequence[int],
    schedule: NoiseSchedule,
    rng: RngStream,
) -> np.ndarray:
    """
    Échantillonnage ancestral depuis z_T ~ B(1/2)

    Args:
        denoiser: prédicteur de probabilités d'inversion
        shape: dimensions (C, H, W) du code latent
        schedule: planning de bruit
        rng: flux aléatoire

    Returns:
        np.ndarray: z_0 binaire
    """
    z = bernoulli_sample(np.full(tuple(shape), 0.5), rng.derive("prior"))
    step_rng = rng.derive("reverse")
    for t in range(schedule.T, 0, -1):
        eps = checked_prediction(denoiser, z, t)
        z = sample_step(z, predict_z0(z, eps), t, schedule, step_rng)
    return z
