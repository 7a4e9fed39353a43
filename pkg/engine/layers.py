"""
Layers Module
Primitives de réseau avec différentiation en mode inverse écrite à la main
(convolution 2D, SiLU, sigmoïde, pooling, suréchantillonnage, plongement temporel)
"""
from typing import Dict, List, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from core.errors import InvalidRangeError, ShapeMismatchError
from core.rng import RngStream


class ParameterSet:
    """
    Vecteur plat de paramètres avec vues nommées

    Les vues pointent dans le vecteur: une mise à jour en place de
    `vector` (optimiseur) est visible par toutes les couches.
    """

    def __init__(self, layout: List[Tuple[str, Tuple[int, ...]]]):
        self.layout: Dict[str, Tuple[int, Tuple[int, ...]]] = {}
        offset = 0
        for name, shape in layout:
            if name in self.layout:
                raise InvalidRangeError(f"duplicate parameter name '{name}'")
            self.layout[name] = (offset, tuple(shape))
            offset += int(np.prod(shape))
        self.size = offset
        self.vector = np.zeros(offset, dtype=np.float64)

    def view(self, name: str) -> np.ndarray:
        offset, shape = self.layout[name]
        return self.vector[offset:offset + int(np.prod(shape))].reshape(shape)

    def zeros_like(self) -> "GradientBuffer":
        return GradientBuffer(self)

    def load(self, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype=np.float64).reshape(-1)
        if vector.size != self.size:
            raise ShapeMismatchError((self.size,), vector.shape, "parameter vector")
        self.vector[:] = vector

    def init_fan_in(self, rng: RngStream, zero: Tuple[str, ...] = ()) -> None:
        """
        Initialisation uniforme U(-1/√fan_in, 1/√fan_in), biais à zéro

        Args:
            rng: flux aléatoire
            zero: couches (préfixes) initialisées entièrement à zéro
        """
        for name, (_, shape) in self.layout.items():
            target = self.view(name)
            if name.endswith(".b") or name.startswith(zero):
                target[...] = 0.0
                continue
            fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else int(shape[0])
            bound = 1.0 / np.sqrt(max(fan_in, 1))
            target[...] = rng.uniform(-bound, bound, size=shape)


class GradientBuffer:
    """Gradient plat aligné sur un ParameterSet"""

    def __init__(self, params: ParameterSet):
        self.params = params
        self.vector = np.zeros(params.size, dtype=np.float64)

    def view(self, name: str) -> np.ndarray:
        offset, shape = self.params.layout[name]
        return self.vector[offset:offset + int(np.prod(shape))].reshape(shape)

    def add(self, name: str, value: np.ndarray) -> None:
        self.view(name)[...] += value


# ---------------------------------------------------------------- convolution

def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> Tuple[np.ndarray, tuple]:
    """
    Convolution 'same' à pas 1, noyau impair, remplissage par zéros

    Args:
        x: (N, Cin, H, W)
        weight: (Cout, Cin, k, k)
        bias: (Cout,)

    Returns:
        (sortie (N, Cout, H, W), cache pour la rétropropagation)
    """
    k = weight.shape[-1]
    if x.shape[1] != weight.shape[1]:
        raise ShapeMismatchError((x.shape[0], weight.shape[1]) + x.shape[2:], x.shape, "conv input")
    pad = k // 2
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (k, k), axis=(2, 3))
    out = np.einsum("nchwij,ocij->nohw", windows, weight, optimize=True)
    out += bias[None, :, None, None]
    return out, (windows, weight)


def conv2d_backward(dout: np.ndarray, cache: tuple) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients (dx, dweight, dbias) d'une convolution 'same'"""
    windows, weight = cache
    k = weight.shape[-1]
    pad = k // 2
    dweight = np.einsum("nchwij,nohw->ocij", windows, dout, optimize=True)
    dbias = dout.sum(axis=(0, 2, 3))
    padded = np.pad(dout, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    dwindows = sliding_window_view(padded, (k, k), axis=(2, 3))
    dx = np.einsum("nohwij,ocij->nchw", dwindows, weight[:, :, ::-1, ::-1], optimize=True)
    return dx, dweight, dbias


# --------------------------------------------------------------- activations

def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    exp_x = np.exp(x[~positive])
    out[~positive] = exp_x / (1.0 + exp_x)
    return out


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def silu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return dout * (s + x * s * (1.0 - s))


# ------------------------------------------------------------ resampling

def avg_pool(x: np.ndarray, k: int) -> np.ndarray:
    n, c, h, w = x.shape
    if h % k or w % k:
        raise ShapeMismatchError((n, c, h - h % k, w - w % k), x.shape, f"pool input (k={k})")
    return x.reshape(n, c, h // k, k, w // k, k).mean(axis=(3, 5))


def avg_pool_backward(dout: np.ndarray, k: int) -> np.ndarray:
    return upsample(dout, k) / float(k * k)


def upsample(x: np.ndarray, k: int) -> np.ndarray:
    """Suréchantillonnage au plus proche voisin d'un facteur k"""
    return np.repeat(np.repeat(x, k, axis=-2), k, axis=-1)


def upsample_backward(dout: np.ndarray, k: int) -> np.ndarray:
    n, c, h, w = dout.shape
    return dout.reshape(n, c, h // k, k, w // k, k).sum(axis=(3, 5))


# ------------------------------------------------------------ time embedding

def sinusoidal_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """
    Plongement sinusoïdal des pas de temps

    Args:
        t: (N,) pas de temps
        dim: dimension paire >= 4

    Returns:
        np.ndarray: (N, dim) = [sin(t·f_k), cos(t·f_k)]
    """
    if dim < 4 or dim % 2:
        raise InvalidRangeError(f"time embedding dim must be even and >= 4, got {dim}")
    half = dim // 2
    frequencies = np.exp(-np.log(10000.0) * np.arange(half) / (half - 1))
    angles = np.asarray(t, dtype=np.float64)[:, None] * frequencies[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)
