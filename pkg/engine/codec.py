"""
Codec Module
Passage image ↔ code latent binaire: codec par plans de bits (code de Gray,
sans entraînement) et petit autoencodeur binarisant appris
"""
from abc import ABC, abstractmethod
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from core.errors import InvalidRangeError, ShapeMismatchError
from core.rng import RngStream
from engine.diffusion import as_bits, as_probs, bernoulli_sample
from engine.layers import (
    ParameterSet,
    avg_pool,
    avg_pool_backward,
    conv2d,
    conv2d_backward,
    sigmoid,
    silu,
    silu_backward,
    upsample,
    upsample_backward,
)
from engine.training import TrainConfig, TrainingResult, make_optimizer


class CodecKind(str, Enum):
    """Types de codec"""
    BITPLANE = "bitplane"
    LEARNED = "learned"


class BinarizeMode(str, Enum):
    """Binarisation de la sortie de l'encodeur"""
    SAMPLE = "sample"
    THRESHOLD = "threshold"


class CodecSpec(BaseModel):
    """Paramètres du codec (C canaux latents, facteur de compression k)"""
    kind: CodecKind = CodecKind.BITPLANE
    image_channels: int = Field(default=1, ge=1)
    latent_channels: int = Field(default=4, ge=1)
    compression: int = Field(default=4, ge=1)
    hidden_channels: int = Field(default=16, ge=1)

    @model_validator(mode="after")
    def _check_bitplane(self) -> "CodecSpec":
        if self.kind == CodecKind.BITPLANE and self.latent_channels % self.image_channels:
            raise ValueError("bitplane codec needs latent_channels divisible by image_channels")
        return self

    @property
    def bits_per_pixel(self) -> int:
        return self.latent_channels // self.image_channels

    def latent_shape(self, image_shape: Sequence[int]) -> Tuple[int, int, int]:
        c, h, w = image_shape
        if c != self.image_channels:
            raise ShapeMismatchError((self.image_channels, h, w), image_shape, "image")
        if h % self.compression or w % self.compression:
            raise ShapeMismatchError(
                (c, h - h % self.compression, w - w % self.compression), image_shape, "image"
            )
        return self.latent_channels, h // self.compression, w // self.compression


def check_image(x: np.ndarray) -> np.ndarray:
    """Valide une image (c, h, w) à valeurs dans [0, 1]"""
    image = np.asarray(x, dtype=np.float64)
    if image.ndim != 3 or min(image.shape) < 1:
        raise ShapeMismatchError(("c", "h", "w"), image.shape, "image")
    if np.isnan(image).any() or image.min() < 0.0 or image.max() > 1.0:
        raise InvalidRangeError("image pixels must lie in [0, 1]")
    return image


def binarize(y: np.ndarray, mode: BinarizeMode | str, rng: Optional[RngStream] = None) -> np.ndarray:
    """
    Binarise la sortie de l'encodeur

    Args:
        y: probabilités
        mode: sample (z ~ B(y)) ou threshold (y >= 0.5, égalité vers 1)
        rng: flux requis en mode sample

    Returns:
        np.ndarray: BitTensor
    """
    probs = as_probs(y)
    if BinarizeMode(mode) == BinarizeMode.THRESHOLD:
        return (probs >= 0.5).astype(np.uint8)
    if rng is None:
        raise InvalidRangeError("sample binarization requires an rng stream")
    return bernoulli_sample(probs, rng)


class Codec(ABC):
    """Interface commune: encode → probabilités, decode → image"""

    def __init__(self, spec: CodecSpec):
        self.spec = spec

    def latent_shape(self, image_shape: Sequence[int]) -> Tuple[int, int, int]:
        return self.spec.latent_shape(image_shape)

    def image_shape(self, latent_shape: Sequence[int]) -> Tuple[int, int, int]:
        c, h, w = latent_shape
        if c != self.spec.latent_channels:
            raise ShapeMismatchError((self.spec.latent_channels, h, w), latent_shape, "latent")
        k = self.spec.compression
        return self.spec.image_channels, h * k, w * k

    @abstractmethod
    def encode(self, x: np.ndarray) -> np.ndarray:
        """Image → ProbTensor (C, h/k, w/k)"""

    @abstractmethod
    def decode(self, z: np.ndarray) -> np.ndarray:
        """BitTensor → image dans [0, 1]"""


# ---------------------------------------------------------------- bit planes

def gray_encode(levels: np.ndarray) -> np.ndarray:
    return levels ^ (levels >> 1)


def gray_decode(codes: np.ndarray) -> np.ndarray:
    levels = codes.copy()
    shift = codes >> 1
    while np.any(shift):
        levels ^= shift
        shift = shift >> 1
    return levels


class BitplaneCodec(Codec):
    """
    Codec déterministe: moyenne par blocs k×k, quantification sur 2^B
    niveaux, bits du code de Gray en canaux (poids fort d'abord)
    """

    def encode(self, x: np.ndarray) -> np.ndarray:
        image = check_image(x)
        self.latent_shape(image.shape)
        bits = self.spec.bits_per_pixel
        pooled = avg_pool(image[None], self.spec.compression)[0]
        levels = np.clip(np.floor(pooled * (1 << bits)), 0, (1 << bits) - 1).astype(np.int64)
        codes = gray_encode(levels)
        planes = [(codes >> (bits - 1 - plane)) & 1 for plane in range(bits)]
        # (c, bits, h', w') → (c·bits, h', w')
        stacked = np.stack(planes, axis=1).reshape(-1, *codes.shape[1:])
        return stacked.astype(np.float64)

    def decode(self, z: np.ndarray) -> np.ndarray:
        bits_tensor = as_bits(z)
        self.image_shape(bits_tensor.shape)
        bits = self.spec.bits_per_pixel
        grouped = bits_tensor.reshape(self.spec.image_channels, bits, *bits_tensor.shape[1:])
        codes = np.zeros((self.spec.image_channels,) + bits_tensor.shape[1:], dtype=np.int64)
        for plane in range(bits):
            codes = (codes << 1) | grouped[:, plane].astype(np.int64)
        levels = gray_decode(codes)
        intensities = (levels + 0.5) / float(1 << bits)
        return upsample(intensities[None], self.spec.compression)[0]


# ------------------------------------------------------------------- learned

class LearnedCodec(Codec):
    """
    Autoencodeur binarisant

    encodeur: conv → SiLU → pool(k) → conv → SiLU → conv → sigmoïde
    décodeur: conv → SiLU → upsample(k) → conv → SiLU → conv → sigmoïde
    """

    KERNEL = 3

    def __init__(self, spec: CodecSpec):
        super().__init__(spec)
        k, c, w, latent = self.KERNEL, spec.image_channels, spec.hidden_channels, spec.latent_channels
        self.params = ParameterSet([
            ("enc_in.w", (w, c, k, k)), ("enc_in.b", (w,)),
            ("enc_mid.w", (w, w, k, k)), ("enc_mid.b", (w,)),
            ("enc_out.w", (latent, w, k, k)), ("enc_out.b", (latent,)),
            ("dec_in.w", (w, latent, k, k)), ("dec_in.b", (w,)),
            ("dec_mid.w", (w, w, k, k)), ("dec_mid.b", (w,)),
            ("dec_out.w", (c, w, k, k)), ("dec_out.b", (c,)),
        ])

    @classmethod
    def initialize(cls, spec: CodecSpec, rng: RngStream) -> "LearnedCodec":
        if spec.kind != CodecKind.LEARNED:
            raise InvalidRangeError(f"LearnedCodec needs kind=learned, got {spec.kind.value}")
        codec = cls(spec)
        codec.params.init_fan_in(rng)
        return codec

    def _conv(self, name: str, x: np.ndarray) -> Tuple[np.ndarray, tuple]:
        return conv2d(x, self.params.view(f"{name}.w"), self.params.view(f"{name}.b"))

    def _encode_batch(self, images: np.ndarray) -> Tuple[np.ndarray, Dict]:
        cache: Dict = {}
        a, cache["enc_in"] = self._conv("enc_in", images)
        cache["a"] = a
        pooled = avg_pool(silu(a), self.spec.compression)
        b, cache["enc_mid"] = self._conv("enc_mid", pooled)
        cache["b"] = b
        logits, cache["enc_out"] = self._conv("enc_out", silu(b))
        return sigmoid(logits), cache

    def _encode_backward(self, dy: np.ndarray, y: np.ndarray, cache: Dict, grads) -> None:
        dlogits = dy * y * (1.0 - y)
        dsb, dw, db = conv2d_backward(dlogits, cache["enc_out"])
        grads.add("enc_out.w", dw)
        grads.add("enc_out.b", db)
        dpooled, dw, db = conv2d_backward(silu_backward(dsb, cache["b"]), cache["enc_mid"])
        grads.add("enc_mid.w", dw)
        grads.add("enc_mid.b", db)
        dsa = avg_pool_backward(dpooled, self.spec.compression)
        _, dw, db = conv2d_backward(silu_backward(dsa, cache["a"]), cache["enc_in"])
        grads.add("enc_in.w", dw)
        grads.add("enc_in.b", db)

    def _decode_batch(self, latents: np.ndarray) -> Tuple[np.ndarray, Dict]:
        cache: Dict = {}
        a, cache["dec_in"] = self._conv("dec_in", latents)
        cache["a"] = a
        up = upsample(silu(a), self.spec.compression)
        b, cache["dec_mid"] = self._conv("dec_mid", up)
        cache["b"] = b
        logits, cache["dec_out"] = self._conv("dec_out", silu(b))
        return sigmoid(logits), cache

    def _decode_backward(self, dx: np.ndarray, x_hat: np.ndarray, cache: Dict, grads) -> np.ndarray:
        dlogits = dx * x_hat * (1.0 - x_hat)
        dsb, dw, db = conv2d_backward(dlogits, cache["dec_out"])
        grads.add("dec_out.w", dw)
        grads.add("dec_out.b", db)
        dup, dw, db = conv2d_backward(silu_backward(dsb, cache["b"]), cache["dec_mid"])
        grads.add("dec_mid.w", dw)
        grads.add("dec_mid.b", db)
        dsa = upsample_backward(dup, self.spec.compression)
        dz, dw, db = conv2d_backward(silu_backward(dsa, cache["a"]), cache["dec_in"])
        grads.add("dec_in.w", dw)
        grads.add("dec_in.b", db)
        return dz

    def encode(self, x: np.ndarray) -> np.ndarray:
        image = check_image(x)
        self.latent_shape(image.shape)
        return self._encode_batch(image[None])[0][0]

    def decode(self, z: np.ndarray) -> np.ndarray:
        bits = as_bits(z)
        self.image_shape(bits.shape)
        return self._decode_batch(bits[None].astype(np.float64))[0][0]

    def reconstruction_step(
        self, images: np.ndarray, rng: RngStream
    ) -> Tuple[float, np.ndarray]:
        """
        MSE de reconstruction à travers la binarisation échantillonnée

        Le gradient traverse l'échantillonnage par estimateur
        straight-through (∂z/∂y = identité).

        Returns:
            (MSE, gradient plat)
        """
        grads = self.params.zeros_like()
        y, enc_cache = self._encode_batch(images)
        z = bernoulli_sample(y, rng).astype(np.float64)
        x_hat, dec_cache = self._decode_batch(z)
        diff = x_hat - images
        loss = float(np.mean(diff * diff))
        dx_hat = 2.0 * diff / diff.size
        dz = self._decode_backward(dx_hat, x_hat, dec_cache, grads)
        self._encode_backward(dz, y, enc_cache, grads)
        return loss, grads.vector


def encode_dataset(
    codec: Codec, images: Sequence[np.ndarray], mode: BinarizeMode | str, seed: int
) -> List[np.ndarray]:
    """Encode et binarise chaque image avec un flux dérivé de son indice"""
    root = RngStream(seed).derive("encode-dataset")
    return [
        binarize(codec.encode(image), mode, root.derive(index))
        for index, image in enumerate(images)
    ]


def build_codec(spec: CodecSpec, rng: Optional[RngStream] = None) -> Codec:
    """Fabrique le codec correspondant à la spécification"""
    if spec.kind == CodecKind.BITPLANE:
        return BitplaneCodec(spec)
    return LearnedCodec.initialize(spec, rng or RngStream(0).derive("codec-init"))


def train_autoencoder(
    dataset: Sequence[np.ndarray],
    spec: CodecSpec,
    config: TrainConfig,
    on_iteration: Optional[Callable[[int, float], None]] = None,
) -> TrainingResult:
    """
    Entraîne l'autoencodeur appris (MSE + straight-through)

    Args:
        dataset: images saines de même forme
        spec: spécification (kind=learned)
        config: hyperparamètres

    Returns:
        TrainingResult: LearnedCodec entraîné + historique des MSE
    """
    if len(dataset) == 0:
        raise InvalidRangeError("autoencoder dataset is empty")
    images = np.stack([check_image(x) for x in dataset])
    spec.latent_shape(images.shape[1:])

    root = RngStream(config.seed).derive("train-autoencoder")
    codec = LearnedCodec.initialize(spec, root.derive("init"))
    optimizer = make_optimizer(config, codec.params.size)
    history: List[float] = []

    for iteration in range(config.iterations):
        iteration_rng = root.derive(iteration)
        indices = iteration_rng.integers(0, len(images), size=config.batch_size)
        loss, grad = codec.reconstruction_step(images[indices], iteration_rng.derive("binarize"))
        optimizer.step(codec.params.vector, grad)
        history.append(loss)
        if on_iteration is not None:
            on_iteration(iteration + 1, loss)

    return TrainingResult(model=codec, loss_history=history)
