"""
Anomaly Module
Inférence masquée (masque monotone + recollage), reconstruction pseudo-saine,
carte d'anomalie, score de masque et post-traitement de la segmentation
"""
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage

from core.errors import InvalidRangeError, ShapeMismatchError, TimestepOutOfRangeError
from core.rng import RngStream
from engine.codec import BinarizeMode, Codec, binarize, check_image
from engine.denoiser import Denoiser
from engine.diffusion import as_bits, checked_prediction, forward_jump, predict_z0, sample_step
from engine.schedule import NoiseSchedule

# connexité 8 pour l'étiquetage des composantes
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


class InferenceConfig(BaseModel):
    """Paramètres d'inférence et de post-traitement"""
    L: int = Field(default=200, ge=1)
    P: float = Field(default=0.5, ge=0.0, lt=1.0)
    binarize_mode: BinarizeMode = BinarizeMode.SAMPLE
    seed: int = 0
    median_kernel: int = Field(default=5, ge=1)
    seg_threshold: float = Field(default=0.5, ge=0.0)
    min_component: int = Field(default=10, ge=0)
    normalize_map: bool = False
    keep_trace: bool = False


class MaskState:
    """
    Masque binaire monotone sur le code latent

    1 = entrée remplacée par l'estimation z̃_0, 0 = code d'origine conservé.
    Une entrée passée à 1 y reste.
    """

    def __init__(self, shape: Tuple[int, ...]):
        self.mask = np.zeros(shape, dtype=np.uint8)
        self.history: List[float] = []

    def update(self, flip_probs: np.ndarray, threshold: float) -> np.ndarray:
        """M ← M ∨ (ε_θ > P), puis enregistre la fraction masquée"""
        if flip_probs.shape != self.mask.shape:
            raise ShapeMismatchError(self.mask.shape, flip_probs.shape, "flip probabilities")
        self.mask |= (flip_probs > threshold).astype(np.uint8)
        self.history.append(self.fraction)
        return self.mask

    @property
    def fraction(self) -> float:
        return mask_fraction(self.mask)


class TraceStep(BaseModel):
    """Un pas de la chaîne inverse"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    t: int
    z0_estimate: np.ndarray
    z0_stitched: np.ndarray
    mask_fraction: float


class AnomalyResult(BaseModel):
    """Résultat de l'inférence pour une image"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    reconstruction: np.ndarray
    anomaly_map: np.ndarray
    segmentation: np.ndarray
    mask_fraction: float = Field(ge=0.0, le=100.0)
    mask: np.ndarray
    latent: np.ndarray
    restored_latent: np.ndarray
    mask_history: List[float] = Field(default_factory=list)
    trace: Optional[List[TraceStep]] = None


def mask_fraction(mask: Union[MaskState, np.ndarray]) -> float:
    """Pourcentage d'entrées masquées: 100 × (#1) / (#entrées)"""
    array = mask.mask if isinstance(mask, MaskState) else as_bits(mask)
    if array.size == 0:
        return 0.0
    return 100.0 * float(np.count_nonzero(array)) / float(array.size)


def stitch(mask: np.ndarray, z0_estimate: np.ndarray, latent: np.ndarray) -> np.ndarray:
    """z̃'_0 = M·z̃_0 + (1 - M)·z, entrée par entrée"""
    bits = as_bits(mask)
    if not bits.shape == np.shape(z0_estimate) == np.shape(latent):
        raise ShapeMismatchError(bits.shape, np.shape(z0_estimate), "stitch operands")
    return np.where(bits == 1, np.asarray(z0_estimate, dtype=np.float64), np.asarray(latent, dtype=np.float64))


def anomaly_map(x: np.ndarray, x_hat: np.ndarray) -> np.ndarray:
    """
    Carte d'anomalie a = Σ_c (x - x̂)²

    Args:
        x: image (c, h, w)
        x_hat: reconstruction (c, h, w)

    Returns:
        np.ndarray: carte (h, w) >= 0
    """
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeMismatchError(x.shape, x_hat.shape, "reconstruction")
    if x.ndim != 3:
        raise ShapeMismatchError(("c", "h", "w"), x.shape, "image")
    diff = x - x_hat
    return np.sum(diff * diff, axis=0)


def normalize(a: np.ndarray) -> np.ndarray:
    """Normalisation min-max par image (carte constante → zéros)"""
    low, high = float(a.min()), float(a.max())
    if high - low <= 0.0:
        return np.zeros_like(a, dtype=np.float64)
    return (a - low) / (high - low)


def postprocess(
    a: np.ndarray,
    median_kernel: int = 5,
    threshold: float = 0.5,
    min_component: int = 10,
) -> np.ndarray:
    """
    Filtre médian, seuillage strict puis suppression des petites composantes

    Args:
        a: carte d'anomalie (h, w)
        median_kernel: taille impaire du filtre (bords répliqués)
        threshold: seuil (a > threshold)
        min_component: taille minimale d'une composante 8-connexe

    Returns:
        np.ndarray: segmentation binaire uint8 (h, w)
    """
    if median_kernel < 1 or median_kernel % 2 == 0:
        raise InvalidRangeError(f"median kernel must be odd and >= 1, got {median_kernel}")
    if threshold < 0.0:
        raise InvalidRangeError(f"segmentation threshold must be >= 0, got {threshold}")
    if min_component < 0:
        raise InvalidRangeError(f"min component size must be >= 0, got {min_component}")
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeMismatchError(("h", "w"), a.shape, "anomaly map")

    filtered = ndimage.median_filter(a, size=median_kernel, mode="nearest")
    binary = filtered > threshold
    labels, count = ndimage.label(binary, structure=EIGHT_CONNECTED)
    if count == 0:
        return binary.astype(np.uint8)
    sizes = np.bincount(labels.ravel())
    keep = sizes >= min_component
    keep[0] = False
    return keep[labels].astype(np.uint8)


def _inference_streams(seed: int) -> Tuple[RngStream, RngStream, RngStream]:
    root = RngStream(seed).derive("inference")
    return root.derive("binarize"), root.derive("noise"), root.derive("denoise")


def _run_chain(
    x: np.ndarray,
    codec: Codec,
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    cfg: InferenceConfig,
    masked: bool,
) -> AnomalyResult:
    if cfg.L > schedule.T:
        raise TimestepOutOfRangeError(cfg.L, schedule.T)
    image = check_image(x)
    binarize_rng, noise_rng, denoise_rng = _inference_streams(cfg.seed)

    latent = binarize(codec.encode(image), cfg.binarize_mode, binarize_rng)
    z = forward_jump(latent, cfg.L, schedule, noise_rng)
    state = MaskState(latent.shape)
    trace: Optional[List[TraceStep]] = [] if cfg.keep_trace else None

    for t in range(cfg.L, 0, -1):
        eps = checked_prediction(denoiser, z, t)
        z0_estimate = predict_z0(z, eps)
        if masked:
            stitched = stitch(state.update(eps, cfg.P), z0_estimate, latent)
        else:
            stitched = z0_estimate
        if trace is not None:
            trace.append(TraceStep(
                t=t,
                z0_estimate=z0_estimate,
                z0_stitched=stitched,
                mask_fraction=state.fraction if masked else 100.0,
            ))
        z = sample_step(z, stitched, t, schedule, denoise_rng)

    reconstruction = codec.decode(z)
    amap = anomaly_map(image, reconstruction)
    scored = normalize(amap) if cfg.normalize_map else amap
    segmentation = postprocess(scored, cfg.median_kernel, cfg.seg_threshold, cfg.min_component)

    return AnomalyResult(
        reconstruction=reconstruction,
        anomaly_map=amap,
        segmentation=segmentation,
        mask_fraction=state.fraction if masked else 100.0,
        mask=state.mask if masked else np.ones_like(latent),
        latent=latent,
        restored_latent=z,
        mask_history=state.history,
        trace=trace,
    )


def masked_inference(
    x: np.ndarray,
    codec: Codec,
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    cfg: InferenceConfig,
) -> AnomalyResult:
    """
    Reconstruction pseudo-saine par débruitage masqué

    z = binarise(encode(x)), z_L par saut direct, puis pour t = L..1:
    z̃_0 = |z_t - ε_θ|, M ← M ∨ (ε_θ > P), recollage avec z,
    z_{t-1} ~ B(θ_post(z_t, z̃'_0)). Déterministe pour une graine donnée.

    Args:
        x: image (c, h, w) dans [0, 1]
        codec: codec compatible avec le débruiteur
        denoiser: prédicteur des probabilités d'inversion
        schedule: planning de bruit (L <= T)
        cfg: paramètres d'inférence

    Returns:
        AnomalyResult: reconstruction, carte, segmentation, score de masque
    """
    return _run_chain(x, codec, denoiser, schedule, cfg, masked=True)


def unmasked_inference(
    x: np.ndarray,
    codec: Codec,
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    L: int,
    seed: int,
    cfg: Optional[InferenceConfig] = None,
) -> AnomalyResult:
    """
    Chaîne bruitage/débruitage sans masque (z̃'_0 = z̃_0)

    Partage les flux aléatoires de masked_inference: avec P = 0 les deux
    donnent le même résultat bit à bit. mask_fraction vaut 100.
    """
    base = cfg or InferenceConfig()
    settings = InferenceConfig(**{**base.model_dump(), "L": L, "seed": seed})
    return _run_chain(x, codec, denoiser, schedule, settings, masked=False)


def decode_trace(codec: Codec, result: AnomalyResult) -> List[Tuple[int, np.ndarray]]:
    """
    Décode les estimations recollées de chaque pas

    Les estimations réelles sont seuillées à 0.5 avant décodage.

    Returns:
        liste de (t, image décodée)
    """
    if result.trace is None:
        raise InvalidRangeError("result carries no trace; run inference with keep_trace=True")
    return [
        (step.t, codec.decode((step.z0_stitched >= 0.5).astype(np.uint8)))
        for step in result.trace
    ]
