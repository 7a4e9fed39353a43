"""
Errors Module
Hiérarchie d'exceptions du système de détection d'anomalies
"""
from typing import Optional, Sequence, Tuple


class BernoulliADError(Exception):
    """Exception de base du projet"""


class ConfigError(BernoulliADError, ValueError):
    """Fichier de configuration invalide (clé inconnue, valeur imbriquée, type)"""


class InvalidRangeError(BernoulliADError, ValueError):
    """Paramètre hors de son domaine de validité"""


class TimestepOutOfRangeError(BernoulliADError, IndexError):
    """Pas de temps t hors de [1, T]"""

    def __init__(self, t: int, T: int):
        super().__init__(f"timestep t={t} outside [1, {T}]")
        self.t = t
        self.T = T


class InvalidProbabilityError(BernoulliADError, ValueError):
    """Tenseur de probabilités contenant des NaN ou des valeurs hors de [0, 1]"""


class InvalidPredictionError(BernoulliADError, ValueError):
    """Sortie du débruiteur hors de [0, 1]"""


class ShapeMismatchError(BernoulliADError, ValueError):
    """Dimensions incompatibles entre deux tenseurs"""

    def __init__(self, expected: Sequence[int], actual: Sequence[int], what: str = "tensor"):
        super().__init__(f"{what} shape mismatch: expected {tuple(expected)}, got {tuple(actual)}")
        self.expected = tuple(expected)
        self.actual = tuple(actual)


class DegeneratePosteriorError(BernoulliADError, ArithmeticError):
    """
    Normalisateur du postérieur nul (ou sous-normal)

    Attributes:
        indices: indices (tuples) des entrées fautives
    """

    def __init__(self, indices: Sequence[Tuple[int, ...]], t: Optional[int] = None):
        preview = ", ".join(str(tuple(int(v) for v in i)) for i in list(indices)[:5])
        more = "" if len(indices) <= 5 else f" (+{len(indices) - 5} more)"
        super().__init__(f"degenerate posterior at t={t}: entries {preview}{more}")
        self.indices = [tuple(int(v) for v in i) for i in indices]
        self.t = t


class UndefinedMetricError(BernoulliADError, ValueError):
    """Métrique non définie pour les entrées fournies"""


class ContainerFormatError(BernoulliADError, ValueError):
    """Fichier BDT1 ou PGM mal formé"""
