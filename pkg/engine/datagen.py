"""
Datagen Module
Jeu de données synthétique déterministe: fantômes sains (ellipses imbriquées)
et variantes avec anomalies injectées accompagnées de masques exacts
"""
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.errors import InvalidRangeError
from core.rng import RngStream

Range = Tuple[float, float]

# tentatives de placement d'une anomalie avant réduction du rayon
PLACEMENT_ATTEMPTS = 64


class PhantomSpec(BaseModel):
    """Paramètres de génération des fantômes"""
    size: int = Field(default=64, ge=8)
    channels: int = Field(default=1, ge=1)
    outer_axes: Range = (0.62, 0.85)
    inner_axes: Range = (0.18, 0.35)
    inner_count: int = Field(default=2, ge=0)
    # tissu sombre (< 0.25 avec le gradient) et lésions claires: l'écart au
    # carré dans une lésion dépasse 0.56, au-dessus du seuil de segmentation
    tissue_band: Range = (0.12, 0.17)
    inner_bands: Tuple[Range, ...] = ((0.20, 0.22), (0.05, 0.08))
    gradient_amplitude: float = Field(default=0.03, ge=0.0)
    channel_gain: Range = (0.8, 1.0)
    blob_radius: Range = (4.0, 7.0)
    blob_delta: Range = (0.85, 0.95)
    blob_count: Tuple[int, int] = (1, 3)

    @model_validator(mode="after")
    def _check_ranges(self) -> "PhantomSpec":
        for name in ("outer_axes", "inner_axes", "tissue_band", "channel_gain", "blob_radius", "blob_delta"):
            low, high = getattr(self, name)
            if low > high:
                raise ValueError(f"{name}: lower bound {low} above upper bound {high}")
        if not (0.0 < self.outer_axes[0] and self.outer_axes[1] <= 1.0):
            raise ValueError("outer_axes must lie in (0, 1]")
        if not 1 <= self.blob_count[0] <= self.blob_count[1]:
            raise ValueError("blob_count must satisfy 1 <= min <= max")
        if self.blob_radius[0] <= 0.0:
            raise ValueError("blob_radius must be positive")
        return self


class AnomalousSample(BaseModel):
    """Image avec anomalies, masque de vérité terrain et image saine d'origine"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    image: np.ndarray
    mask: np.ndarray
    healthy: np.ndarray


def _grid(size: int) -> Tuple[np.ndarray, np.ndarray]:
    coords = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    return np.meshgrid(coords, coords, indexing="ij")


def _ellipse(yy: np.ndarray, xx: np.ndarray, cy: float, cx: float, a: float, b: float, angle: float) -> np.ndarray:
    cos, sin = np.cos(angle), np.sin(angle)
    u = (xx - cx) * cos + (yy - cy) * sin
    v = -(xx - cx) * sin + (yy - cy) * cos
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def _phantom(spec: PhantomSpec, rng: RngStream) -> Tuple[np.ndarray, np.ndarray]:
    """Renvoie (image (c, h, w), masque d'avant-plan (h, w))"""
    yy, xx = _grid(spec.size)
    cy, cx = rng.uniform(-0.05, 0.05, size=2)
    a, b = rng.uniform(*spec.outer_axes, size=2)
    angle = float(rng.uniform(-0.4, 0.4))
    foreground = _ellipse(yy, xx, cy, cx, a, b, angle)

    base = np.zeros((spec.size, spec.size))
    base[foreground] = rng.uniform(*spec.tissue_band)

    for index in range(spec.inner_count):
        band = spec.inner_bands[index % len(spec.inner_bands)] if spec.inner_bands else spec.tissue_band
        ia, ib = rng.uniform(*spec.inner_axes, size=2)
        # centre interne tiré dans la moitié centrale de l'ellipse externe
        oy, ox = rng.uniform(-0.35, 0.35, size=2)
        inner = _ellipse(yy, xx, cy + oy * b, cx + ox * a, ia * a, ib * b, float(rng.uniform(-np.pi, np.pi)))
        base[inner & foreground] = rng.uniform(*band)

    gy, gx = rng.uniform(-1.0, 1.0, size=2)
    gradient = spec.gradient_amplitude * 0.5 * (gy * yy + gx * xx)
    base = np.where(foreground, base + gradient, 0.0)

    gains = rng.uniform(*spec.channel_gain, size=spec.channels)
    if spec.channels == 1:
        gains[0] = 1.0
    image = np.clip(gains[:, None, None] * base[None], 0.0, 1.0)
    return image, foreground


def _disk(size: int, cy: float, cx: float, radius: float) -> np.ndarray:
    rows, cols = np.ogrid[:size, :size]
    return (rows - cy) ** 2 + (cols - cx) ** 2 <= radius * radius


def _place_blob(spec: PhantomSpec, foreground: np.ndarray, rng: RngStream) -> np.ndarray:
    """Disque entièrement contenu dans l'avant-plan"""
    radius = float(rng.uniform(*spec.blob_radius))
    inside = np.argwhere(foreground)
    while radius >= 1.0:
        for _ in range(PLACEMENT_ATTEMPTS):
            cy, cx = inside[int(rng.integers(0, len(inside)))]
            disk = _disk(spec.size, float(cy), float(cx), radius)
            if not np.any(disk & ~foreground):
                return disk
        radius *= 0.75
    raise InvalidRangeError("foreground too small to hold an anomaly blob")


def _split_stream(seed: int, split: str) -> RngStream:
    return RngStream(seed).derive(f"phantoms-{split}")


def generate_healthy(spec: PhantomSpec, n: int, seed: int, split: str = "train") -> List[np.ndarray]:
    """
    Fantômes sains

    Args:
        spec: paramètres de génération
        n: nombre d'images (>= 1)
        seed: graine
        split: nom du sous-ensemble (flux dérivé distinct par sous-ensemble)

    Returns:
        List[np.ndarray]: images (c, h, w) dans [0, 1]
    """
    if n < 1:
        raise InvalidRangeError(f"n must be >= 1, got {n}")
    stream = _split_stream(seed, split)
    return [_phantom(spec, stream.derive(index))[0] for index in range(n)]


def generate_anomalous(spec: PhantomSpec, n: int, seed: int, split: str = "anomalous") -> List[AnomalousSample]:
    """
    Fantômes avec 1 à 3 anomalies (disques plus clairs) et masques exacts

    L'image ne diffère de sa version saine qu'à l'intérieur du masque.
    Avec un décalage d'intensité nul, l'image égale sa version saine.
    """
    if n < 1:
        raise InvalidRangeError(f"n must be >= 1, got {n}")
    stream = _split_stream(seed, split)
    samples: List[AnomalousSample] = []
    for index in range(n):
        item_rng = stream.derive(index)
        healthy, foreground = _phantom(spec, item_rng.derive("base"))
        blob_rng = item_rng.derive("blobs")
        low, high = spec.blob_count
        count = int(blob_rng.integers(low, high + 1))
        mask = np.zeros((spec.size, spec.size), dtype=bool)
        offset = np.zeros((spec.size, spec.size))
        for _ in range(count):
            disk = _place_blob(spec, foreground, blob_rng)
            mask |= disk
            offset[disk] = float(blob_rng.uniform(*spec.blob_delta))
        image = np.clip(healthy + offset[None], 0.0, 1.0)
        samples.append(AnomalousSample(image=image, mask=mask.astype(np.uint8), healthy=healthy))
    return samples
