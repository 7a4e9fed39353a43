"""
Schedule Module
Construction et interrogation du planning de bruit de Bernoulli (β_t, α_t, ᾱ_t, b_t)
"""
import math
from enum import Enum
from typing import Iterator, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from core.errors import InvalidRangeError, TimestepOutOfRangeError

COSINE_OFFSET = 0.008
COSINE_MAX_BETA = 0.999


class ScheduleKind(str, Enum):
    """Courbes β disponibles"""
    LINEAR = "linear"
    COSINE = "cosine"
    CUSTOM = "custom"


def _frozen(values: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(values, dtype=np.float64)
    array.setflags(write=False)
    return array


class NoiseSchedule(BaseModel):
    """
    Tables précalculées du processus de Bernoulli

    Les tableaux sont indexés de 0 à T-1 en interne; l'API publique parle
    en t ∈ [1, T]. Immuable après construction.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: ScheduleKind
    T: int
    beta_start: Optional[float] = None
    beta_end: Optional[float] = None
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    b: np.ndarray

    @classmethod
    def from_betas(
        cls,
        beta: np.ndarray,
        kind: ScheduleKind = ScheduleKind.CUSTOM,
        beta_start: Optional[float] = None,
        beta_end: Optional[float] = None,
    ) -> "NoiseSchedule":
        """
        Construit un planning depuis une table β explicite

        Args:
            beta: β_1..β_T, chaque valeur dans [0, 1]

        Returns:
            NoiseSchedule: planning avec α, ᾱ et la récurrence b
        """
        beta = np.asarray(beta, dtype=np.float64).reshape(-1)
        if beta.size < 1:
            raise InvalidRangeError("schedule needs at least one timestep")
        if not np.all(np.isfinite(beta)) or np.any(beta < 0.0) or np.any(beta > 1.0):
            raise InvalidRangeError("every beta must lie in [0, 1]")

        alpha = 1.0 - beta
        alpha_bar = np.cumprod(alpha)

        # b_1 = β_1/2 ; b_t = (1-β_t) b_{t-1} + β_t/2
        b = np.empty_like(beta)
        previous = 0.0
        for index in range(beta.size):
            previous = (1.0 - beta[index]) * previous + 0.5 * beta[index]
            b[index] = previous

        return cls(
            kind=kind,
            T=int(beta.size),
            beta_start=beta_start,
            beta_end=beta_end,
            beta=_frozen(beta),
            alpha=_frozen(alpha),
            alpha_bar=_frozen(alpha_bar),
            b=_frozen(b),
        )

    def _check(self, t: int) -> int:
        if not 1 <= t <= self.T:
            raise TimestepOutOfRangeError(t, self.T)
        return t - 1

    def beta_at(self, t: int) -> float:
        return float(self.beta[self._check(t)])

    def alpha_bar_at(self, t: int) -> float:
        """ᾱ_t avec la convention ᾱ_0 = 1"""
        if t == 0:
            return 1.0
        return float(self.alpha_bar[self._check(t)])

    def flip_probability(self, t: int) -> float:
        """Probabilité qu'un bit de z_0 soit inversé dans z_t: (1 - ᾱ_t) / 2"""
        return float((1.0 - self.alpha_bar[self._check(t)]) / 2.0)

    def closed_form_gap(self) -> float:
        """Écart max entre la récurrence b_t et la forme close (1 - ᾱ_t)/2"""
        return float(np.max(np.abs(self.b - (1.0 - self.alpha_bar) / 2.0)))

    def rows(self) -> Iterator[Tuple[int, float, float, float, float]]:
        """Lignes `t,beta,alpha,alpha_bar,b` pour l'export CSV"""
        for index in range(self.T):
            yield (
                index + 1,
                float(self.beta[index]),
                float(self.alpha[index]),
                float(self.alpha_bar[index]),
                float(self.b[index]),
            )


def _cosine_betas(T: int) -> np.ndarray:
    def f(t: float) -> float:
        return math.cos(((t / T) + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * math.pi / 2.0) ** 2

    return np.array(
        [min(1.0 - f(t) / f(t - 1), COSINE_MAX_BETA) for t in range(1, T + 1)],
        dtype=np.float64,
    )


def build_schedule(
    kind: ScheduleKind | str = ScheduleKind.LINEAR,
    T: int = 1000,
    beta_start: float = 1e-4,
    beta_end: float = 0.02,
) -> NoiseSchedule:
    """
    Construit un planning linéaire ou cosinus

    Args:
        kind: linear ou cosine (cosine ignore beta_start/beta_end)
        T: nombre de pas (>= 1)
        beta_start: β_1 pour le planning linéaire
        beta_end: β_T pour le planning linéaire

    Returns:
        NoiseSchedule: planning déterministe
    """
    kind = ScheduleKind(kind)
    if T < 1:
        raise InvalidRangeError(f"T must be >= 1, got {T}")

    if kind == ScheduleKind.LINEAR:
        if not (0.0 < beta_start < 1.0 and 0.0 < beta_end < 1.0):
            raise InvalidRangeError("beta bounds must lie in (0, 1)")
        if beta_start > beta_end:
            raise InvalidRangeError(f"beta_start={beta_start} exceeds beta_end={beta_end}")
        beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
        return NoiseSchedule.from_betas(beta, kind, beta_start, beta_end)

    if kind == ScheduleKind.COSINE:
        return NoiseSchedule.from_betas(_cosine_betas(T), kind)

    raise InvalidRangeError(f"cannot build a '{kind.value}' schedule, use from_betas()")
