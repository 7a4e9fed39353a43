"""
Evaluation Module
Métriques (Dice, AUPRC, PSNR), séparabilité du score de masque et recherche
sur grille des paramètres (P, L)
"""
import time
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import ndimage
from sklearn.metrics import average_precision_score, roc_auc_score

from core.errors import InvalidRangeError, ShapeMismatchError, UndefinedMetricError
from core.rng import RngStream
from engine.anomaly import AnomalyResult, InferenceConfig, masked_inference, normalize
from engine.codec import Codec
from engine.denoiser import Denoiser
from engine.schedule import NoiseSchedule

PSNR_CAP_DB = 99.0
PSNR_MIN_MSE = 1e-10

IMAGE_FIELDS = ["image_id", "P", "L", "dice", "auprc", "psnr", "mask_fraction", "seconds"]
CELL_FIELDS = [
    "P", "L", "mean_dice", "std_dice", "mean_auprc", "mean_psnr", "mean_mask_fraction", "mean_seconds",
]
SEPARATION_FIELDS = ["P", "L", "median_healthy", "median_anomalous", "auroc"]


class AuprcSource(str, Enum):
    """Carte utilisée pour l'AUPRC"""
    RAW = "raw"
    FILTERED = "filtered"


def _binary(image: np.ndarray, what: str) -> np.ndarray:
    array = np.asarray(image)
    if not np.all((array == 0) | (array == 1)):
        raise InvalidRangeError(f"{what} must be binary")
    return array.astype(bool)


def dice(pred: np.ndarray, truth: np.ndarray) -> float:
    """
    Score de Dice 2|A ∩ B| / (|A| + |B|)

    Deux masques vides donnent 1.
    """
    a = _binary(pred, "prediction")
    b = _binary(truth, "ground truth")
    if a.shape != b.shape:
        raise ShapeMismatchError(b.shape, a.shape, "prediction")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * float(np.logical_and(a, b).sum()) / float(total)


def auprc(scores: np.ndarray, truth: np.ndarray) -> float:
    """
    Aire sous la courbe précision-rappel (interpolation en escalier)

    Args:
        scores: carte de scores réels
        truth: vérité terrain binaire, au moins un positif

    Returns:
        float: AUPRC dans [0, 1]
    """
    labels = _binary(truth, "ground truth")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != labels.shape:
        raise ShapeMismatchError(labels.shape, scores.shape, "scores")
    if not labels.any():
        raise UndefinedMetricError("AUPRC is undefined without positive pixels")
    return float(average_precision_score(labels.ravel(), scores.ravel()))


def psnr(x: np.ndarray, x_hat: np.ndarray) -> float:
    """PSNR en dB pour une dynamique de 1, plafonné à 99 dB"""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeMismatchError(x.shape, x_hat.shape, "reconstruction")
    mse = float(np.mean((x - x_hat) ** 2))
    if mse < PSNR_MIN_MSE:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * float(np.log10(1.0 / mse)))


class MetricsRow(BaseModel):
    """Métriques d'une image"""
    image_id: str
    dice: float = Field(ge=0.0, le=1.0)
    auprc: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    psnr: float = Field(le=PSNR_CAP_DB)
    mask_fraction: float = Field(ge=0.0, le=100.0)
    seconds: float = Field(default=0.0, ge=0.0)
    diseased: bool = True

    def as_csv(self, P: Optional[float] = None, L: Optional[int] = None) -> Dict[str, str]:
        return {
            "image_id": self.image_id,
            "P": _fmt(P),
            "L": "" if L is None else str(L),
            "dice": _fmt(self.dice),
            "auprc": _fmt(self.auprc),
            "psnr": _fmt(self.psnr),
            "mask_fraction": _fmt(self.mask_fraction),
            "seconds": _fmt(self.seconds),
        }


class MaskScoreSeparation(BaseModel):
    """Séparation sain / pathologique par la fraction de masque"""
    median_healthy: Optional[float] = None
    median_anomalous: Optional[float] = None
    auroc: Optional[float] = None


class GridCell(BaseModel):
    """Moyennes d'une cellule (P, L)"""
    P: float
    L: int
    mean_dice: float
    std_dice: float
    mean_auprc: Optional[float] = None
    mean_psnr: float
    mean_mask_fraction: float
    mean_seconds: float = 0.0
    separation: MaskScoreSeparation = Field(default_factory=MaskScoreSeparation)

    def as_csv(self) -> Dict[str, str]:
        return {
            "P": _fmt(self.P),
            "L": str(self.L),
            "mean_dice": _fmt(self.mean_dice),
            "std_dice": _fmt(self.std_dice),
            "mean_auprc": _fmt(self.mean_auprc),
            "mean_psnr": _fmt(self.mean_psnr),
            "mean_mask_fraction": _fmt(self.mean_mask_fraction),
            "mean_seconds": _fmt(self.mean_seconds),
        }

    def separation_csv(self) -> Dict[str, str]:
        return {
            "P": _fmt(self.P),
            "L": str(self.L),
            "median_healthy": _fmt(self.separation.median_healthy),
            "median_anomalous": _fmt(self.separation.median_anomalous),
            "auroc": _fmt(self.separation.auroc),
        }


class GridSearchResult(BaseModel):
    """Cellules agrégées et lignes par image"""
    cells: List[GridCell] = Field(default_factory=list)
    rows: List[Tuple[float, int, MetricsRow]] = Field(default_factory=list)

    def best(self) -> GridCell:
        """Cellule de meilleur Dice moyen (première en cas d'égalité)"""
        if not self.cells:
            raise InvalidRangeError("grid search produced no cells")
        return max(self.cells, key=lambda cell: cell.mean_dice)

    def cell(self, P: float, L: int) -> GridCell:
        for cell in self.cells:
            if cell.P == P and cell.L == L:
                return cell
        raise KeyError((P, L))


class EvaluationSet(BaseModel):
    """Images de test et masques de vérité terrain"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    images: List[np.ndarray]
    truths: List[np.ndarray]
    ids: Optional[List[str]] = None

    def image_ids(self) -> List[str]:
        return self.ids or [f"img{index:04d}" for index in range(len(self.images))]

    def __len__(self) -> int:
        return len(self.images)


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6f}"


def image_seed(seed: int, index: int) -> int:
    """Graine d'inférence d'une image: ne dépend que de (seed, indice)"""
    return int(RngStream(seed).derive(f"image-{index}").integers(0, 2**63 - 1))


def mask_score_separation(
    healthy: Sequence[float], anomalous: Sequence[float]
) -> MaskScoreSeparation:
    """
    Fraction de masque comme score image: médianes et AUROC

    Args:
        healthy: fractions des images saines
        anomalous: fractions des images pathologiques

    Returns:
        MaskScoreSeparation: AUROC absente si un groupe est vide
    """
    result = MaskScoreSeparation(
        median_healthy=float(np.median(healthy)) if len(healthy) else None,
        median_anomalous=float(np.median(anomalous)) if len(anomalous) else None,
    )
    if len(healthy) and len(anomalous):
        labels = np.concatenate([np.zeros(len(healthy)), np.ones(len(anomalous))])
        scores = np.concatenate([np.asarray(healthy, float), np.asarray(anomalous, float)])
        result.auroc = float(roc_auc_score(labels, scores))
    return result


def evaluate_image(
    image_id: str,
    x: np.ndarray,
    truth: np.ndarray,
    codec: Codec,
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    cfg: InferenceConfig,
    auprc_source: AuprcSource = AuprcSource.RAW,
    record_timing: bool = False,
) -> Tuple[MetricsRow, AnomalyResult]:
    """Inférence masquée puis métriques d'une image"""
    started = time.perf_counter()
    result = masked_inference(x, codec, denoiser, schedule, cfg)
    elapsed = time.perf_counter() - started if record_timing else 0.0

    truth_bits = _binary(truth, "ground truth")
    diseased = bool(truth_bits.any())
    score_map = result.anomaly_map
    if auprc_source == AuprcSource.FILTERED:
        score_map = ndimage.median_filter(
            normalize(score_map) if cfg.normalize_map else score_map,
            size=cfg.median_kernel,
            mode="nearest",
        )
    row = MetricsRow(
        image_id=image_id,
        dice=dice(result.segmentation, truth_bits),
        auprc=auprc(score_map, truth_bits) if diseased else None,
        psnr=psnr(x, result.reconstruction),
        mask_fraction=result.mask_fraction,
        seconds=elapsed,
        diseased=diseased,
    )
    return row, result


def aggregate(P: float, L: int, rows: Sequence[MetricsRow]) -> GridCell:
    """
    Agrège les lignes d'une cellule

    Dice, AUPRC et PSNR sont moyennés sur les images pathologiques (sur
    toutes s'il n'y en a aucune); la fraction de masque sur toutes.
    """
    if not rows:
        raise InvalidRangeError("cannot aggregate an empty cell")
    diseased = [row for row in rows if row.diseased]
    scored = diseased or list(rows)
    dices = np.array([row.dice for row in scored])
    auprcs = [row.auprc for row in diseased if row.auprc is not None]
    return GridCell(
        P=P,
        L=L,
        mean_dice=float(dices.mean()),
        std_dice=float(dices.std()),
        mean_auprc=float(np.mean(auprcs)) if auprcs else None,
        mean_psnr=float(np.mean([row.psnr for row in scored])),
        mean_mask_fraction=float(np.mean([row.mask_fraction for row in rows])),
        mean_seconds=float(np.mean([row.seconds for row in rows])),
        separation=mask_score_separation(
            [row.mask_fraction for row in rows if not row.diseased],
            [row.mask_fraction for row in diseased],
        ),
    )


def grid_search(
    dataset: EvaluationSet,
    codec: Codec,
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    P_values: Sequence[float],
    L_values: Sequence[int],
    seed: int,
    base: Optional[InferenceConfig] = None,
    auprc_source: AuprcSource = AuprcSource.RAW,
    record_timing: bool = False,
    on_cell: Optional[Callable[[GridCell], None]] = None,
) -> GridSearchResult:
    """
    Recherche sur grille (P, L)

    Chaque image utilise une graine dérivée de (seed, indice) seulement:
    toutes les cellules voient le même bruit et le résultat d'une cellule
    ne dépend pas de l'ordre de parcours.

    Args:
        dataset: images de test (saines et pathologiques) et vérités terrain
        P_values: seuils de probabilité
        L_values: niveaux de bruit
        seed: graine de l'expérience
        base: paramètres communs (post-traitement, binarisation)

    Returns:
        GridSearchResult: cellules dans l'ordre P puis L, lignes par image
    """
    if not P_values or not L_values:
        raise InvalidRangeError("grid search needs at least one P and one L")
    if len(dataset) == 0:
        raise InvalidRangeError("evaluation dataset is empty")
    if len(dataset.truths) != len(dataset.images):
        raise ShapeMismatchError((len(dataset.images),), (len(dataset.truths),), "ground truth list")

    base = base or InferenceConfig()
    result = GridSearchResult()
    ids = dataset.image_ids()
    for P in P_values:
        for L in L_values:
            rows: List[MetricsRow] = []
            for index, (image, truth) in enumerate(zip(dataset.images, dataset.truths)):
                cfg = InferenceConfig(**{**base.model_dump(), "P": P, "L": L, "seed": image_seed(seed, index)})
                row, _ = evaluate_image(
                    ids[index], image, truth, codec, denoiser, schedule, cfg, auprc_source, record_timing
                )
                rows.append(row)
                result.rows.append((P, L, row))
            cell = aggregate(P, L, rows)
            result.cells.append(cell)
            if on_cell is not None:
                on_cell(cell)
    return result
