"""
Denoiser Module
Prédicteurs de probabilités d'inversion ε_θ(z_t, t): interface abstraite,
oracle de test, débruiteur constant et réseau convolutif résiduel entraînable
"""
from abc import ABC, abstractmethod
from typing import Callable, Dict, List, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field

from core.errors import InvalidRangeError, ShapeMismatchError
from core.rng import RngStream
from engine.diffusion import as_bits
from engine.layers import (
    ParameterSet,
    conv2d,
    conv2d_backward,
    sigmoid,
    silu,
    silu_backward,
    sinusoidal_embedding,
)

# bornes de sortie: jamais exactement 0 ou 1
OUTPUT_FLOOR = 1e-12

Upstream = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


class Denoiser(ABC):
    """Contrat: predict(z_t, t) renvoie des probabilités de même forme que z_t"""

    @abstractmethod
    def predict(self, z_t: np.ndarray, t: int) -> np.ndarray:
        """
        Prédit la probabilité d'inversion de chaque bit

        Args:
            z_t: BitTensor (C, H, W)
            t: pas de temps dans [1, T]

        Returns:
            np.ndarray: probabilités dans (0, 1)
        """


class OracleDenoiser(Denoiser):
    """Oracle « tricheur » connaissant le vrai z_0: renvoie z_t ⊕ z_0 écrêté"""

    def __init__(self, target: np.ndarray, epsilon_clip: float = 1e-6):
        self.target = as_bits(target)
        self.epsilon_clip = epsilon_clip

    def predict(self, z_t: np.ndarray, t: int) -> np.ndarray:
        bits = as_bits(z_t)
        if bits.shape != self.target.shape:
            raise ShapeMismatchError(self.target.shape, bits.shape, "oracle input")
        flips = np.bitwise_xor(bits, self.target).astype(np.float64)
        return np.clip(flips, self.epsilon_clip, 1.0 - self.epsilon_clip)


class ConstantDenoiser(Denoiser):
    """Prédiction constante (0.5 = aucune information)"""

    def __init__(self, value: float = 0.5):
        self.value = float(value)

    def predict(self, z_t: np.ndarray, t: int) -> np.ndarray:
        return np.full(np.shape(z_t), self.value, dtype=np.float64)


class ArchitectureDescriptor(BaseModel):
    """Description de l'architecture du réseau convolutif"""
    latent_channels: int = Field(default=4, ge=1)
    width: int = Field(default=16, ge=1)
    blocks: int = Field(default=2, ge=0)
    kernel_size: int = Field(default=3, ge=1)
    time_embedding_dim: int = Field(default=32, ge=4)
    recentre_inputs: bool = True

    def layout(self) -> List[Tuple[str, Tuple[int, ...]]]:
        """Noms et formes des paramètres, dans l'ordre du vecteur plat"""
        k, w, c, e = self.kernel_size, self.width, self.latent_channels, self.time_embedding_dim
        entries: List[Tuple[str, Tuple[int, ...]]] = [
            ("conv_in.w", (w, c, k, k)),
            ("conv_in.b", (w,)),
        ]
        for block in range(self.blocks):
            entries += [
                (f"block{block}.time.w", (w, e)),
                (f"block{block}.time.b", (w,)),
                (f"block{block}.conv1.w", (w, w, k, k)),
                (f"block{block}.conv1.b", (w,)),
                (f"block{block}.conv2.w", (w, w, k, k)),
                (f"block{block}.conv2.b", (w,)),
            ]
        entries += [("conv_out.w", (c, w, k, k)), ("conv_out.b", (c,))]
        return entries

    def parameter_count(self) -> int:
        return int(sum(np.prod(shape) for _, shape in self.layout()))


class ConvDenoiser(Denoiser):
    """
    Réseau convolutif résiduel avec plongement temporel sinusoïdal

    conv_in → [SiLU, +temps, conv, SiLU, conv] × blocks (résiduel)
    → SiLU → conv_out → sigmoïde. La couche de sortie est initialisée à
    zéro, donc un réseau neuf prédit exactement 0.5 partout.
    """

    def __init__(self, architecture: ArchitectureDescriptor):
        if architecture.kernel_size % 2 == 0:
            raise InvalidRangeError(f"kernel_size must be odd, got {architecture.kernel_size}")
        self.architecture = architecture
        self.params = ParameterSet(architecture.layout())

    @classmethod
    def initialize(cls, architecture: ArchitectureDescriptor, rng: RngStream) -> "ConvDenoiser":
        model = cls(architecture)
        model.params.init_fan_in(rng, zero=("conv_out",))
        return model

    @property
    def parameters(self) -> np.ndarray:
        return self.params.vector

    # ---------------------------------------------------------------- forward

    def _inputs(self, z_t: np.ndarray) -> np.ndarray:
        x = z_t.astype(np.float64)
        return 2.0 * x - 1.0 if self.architecture.recentre_inputs else x

    def _forward(self, z_batch: np.ndarray, t_batch: np.ndarray) -> Tuple[np.ndarray, Dict]:
        if z_batch.ndim != 4 or z_batch.shape[1] != self.architecture.latent_channels:
            raise ShapeMismatchError(
                (z_batch.shape[0] if z_batch.ndim else 1, self.architecture.latent_channels, "H", "W"),
                z_batch.shape,
                "denoiser input",
            )
        p = self.params
        cache: Dict = {}
        h, cache["conv_in"] = conv2d(self._inputs(z_batch), p.view("conv_in.w"), p.view("conv_in.b"))
        emb = sinusoidal_embedding(t_batch, self.architecture.time_embedding_dim)
        cache["emb"] = emb

        for block in range(self.architecture.blocks):
            name = f"block{block}"
            pre = h
            time_bias = emb @ p.view(f"{name}.time.w").T + p.view(f"{name}.time.b")
            a = silu(pre) + time_bias[:, :, None, None]
            u, conv1_cache = conv2d(a, p.view(f"{name}.conv1.w"), p.view(f"{name}.conv1.b"))
            v, conv2_cache = conv2d(silu(u), p.view(f"{name}.conv2.w"), p.view(f"{name}.conv2.b"))
            h = pre + v
            cache[name] = (pre, u, conv1_cache, conv2_cache)

        cache["head_in"] = h
        logits, cache["conv_out"] = conv2d(silu(h), p.view("conv_out.w"), p.view("conv_out.b"))
        probs = sigmoid(logits)
        cache["probs"] = probs
        return probs, cache

    def _backward(self, upstream: np.ndarray, cache: Dict) -> np.ndarray:
        grads = self.params.zeros_like()
        probs = cache["probs"]
        dlogits = upstream * probs * (1.0 - probs)

        dhead, dw, db = conv2d_backward(dlogits, cache["conv_out"])
        grads.add("conv_out.w", dw)
        grads.add("conv_out.b", db)
        dh = silu_backward(dhead, cache["head_in"])

        emb = cache["emb"]
        for block in reversed(range(self.architecture.blocks)):
            name = f"block{block}"
            pre, u, conv1_cache, conv2_cache = cache[name]
            dsilu_u, dw, db = conv2d_backward(dh, conv2_cache)
            grads.add(f"{name}.conv2.w", dw)
            grads.add(f"{name}.conv2.b", db)
            du = silu_backward(dsilu_u, u)
            da, dw, db = conv2d_backward(du, conv1_cache)
            grads.add(f"{name}.conv1.w", dw)
            grads.add(f"{name}.conv1.b", db)
            dtime = da.sum(axis=(2, 3))
            grads.add(f"{name}.time.w", dtime.T @ emb)
            grads.add(f"{name}.time.b", dtime.sum(axis=0))
            dh = dh + silu_backward(da, pre)

        _, dw, db = conv2d_backward(dh, cache["conv_in"])
        grads.add("conv_in.w", dw)
        grads.add("conv_in.b", db)
        return grads.vector

    # -------------------------------------------------------------- public API

    def predict_batch(self, z_batch: np.ndarray, t_batch: np.ndarray) -> np.ndarray:
        probs, _ = self._forward(as_bits(z_batch), np.asarray(t_batch))
        return np.clip(probs, OUTPUT_FLOOR, 1.0 - OUTPUT_FLOOR)

    def predict(self, z_t: np.ndarray, t: int) -> np.ndarray:
        bits = as_bits(z_t)
        return self.predict_batch(bits[None], np.array([t]))[0]

    def predict_batch_with_gradients(
        self,
        z_batch: np.ndarray,
        t_batch: np.ndarray,
        upstream: Upstream,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Sortie et gradient de Σ upstream·sortie par rapport aux paramètres

        Args:
            z_batch: (N, C, H, W) bits
            t_batch: (N,) pas de temps
            upstream: gradient amont de même forme que la sortie, ou fonction
                sortie -> gradient amont (un seul passage avant)

        Returns:
            (probabilités (N, C, H, W), gradient plat)
        """
        bits = as_bits(z_batch)
        probs, cache = self._forward(bits, np.asarray(t_batch))
        clipped = np.clip(probs, OUTPUT_FLOOR, 1.0 - OUTPUT_FLOOR)
        upstream = np.asarray(upstream(clipped) if callable(upstream) else upstream, dtype=np.float64)
        if upstream.shape != bits.shape:
            raise ShapeMismatchError(bits.shape, upstream.shape, "upstream gradient")
        return clipped, self._backward(upstream, cache)

    def predict_with_gradients(
        self,
        z_t: np.ndarray,
        t: int,
        upstream: Upstream,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Cas d'un seul élément de predict_batch_with_gradients"""
        batched: Upstream
        if callable(upstream):
            single = upstream

            def batched(probs: np.ndarray) -> np.ndarray:
                return np.asarray(single(probs[0]))[None]
        else:
            batched = np.asarray(upstream, dtype=np.float64)[None]
        probs, grads = self.predict_batch_with_gradients(np.asarray(z_t)[None], np.array([t]), batched)
        return probs[0], grads
