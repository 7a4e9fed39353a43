"""
RNG Module
Flux aléatoires reproductibles et dérivables (générateur Philox, basé sur compteur)
"""
import hashlib
from typing import Union

import numpy as np

Label = Union[int, str]

_MASK64 = (1 << 64) - 1


def _label_to_int(label: Label) -> int:
    """Convertit un label (entier ou chaîne) en entier 64 bits stable"""
    if isinstance(label, str):
        digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    return int(label) & _MASK64


class RngStream:
    """
    Flux aléatoire identifié par (seed, stream_id)

    Le même couple produit toujours la même séquence. `derive()` fabrique un
    flux enfant indépendant, ce qui permet de partitionner le travail sans
    dépendre de l'ordre d'exécution.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.Philox(sequence))

    def derive(self, label: Label) -> "RngStream":
        """
        Crée un flux enfant

        Args:
            label: Étiquette de dérivation (indice d'image, nom d'étape...)

        Returns:
            RngStream: Flux indépendant du parent et de ses autres enfants
        """
        mixed = np.random.SeedSequence([self.stream_id, _label_to_int(label), 0x6264]).generate_state(
            1, np.uint64
        )[0]
        return RngStream(self.seed, int(mixed))

    def random(self, shape) -> np.ndarray:
        return self.generator.random(shape)

    def integers(self, low: int, high: int, size=None):
        return self.generator.integers(low, high, size=size)

    def uniform(self, low: float, high: float, size=None):
        return self.generator.uniform(low, high, size=size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id:#x})"
