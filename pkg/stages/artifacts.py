"""
Artifacts Module
Emplacements des jeux de données et des modèles sur disque
"""
from pathlib import Path
from typing import List, Tuple

import numpy as np

from core.config import RunConfig
from core.tensor_io import read_stack, read_tensor
from engine.checkpoint import load_codec, load_denoiser
from engine.codec import Codec
from engine.denoiser import ConvDenoiser
from engine.evaluation import EvaluationSet
from engine.schedule import NoiseSchedule

TRAIN_HEALTHY = "train_healthy.bdt"
TEST_HEALTHY = "test_healthy.bdt"
TEST_ANOMALOUS = "test_anomalous.bdt"
TEST_MASKS = "test_masks.bdt"
PREVIEWS = "previews"

CODEC_DIR = "codec"
DENOISER_DIR = "denoiser"


def data_dir(run_config: RunConfig) -> Path:
    return Path(run_config.data_dir)


def codec_dir(run_config: RunConfig) -> Path:
    return Path(run_config.model_dir) / CODEC_DIR


def denoiser_dir(run_config: RunConfig) -> Path:
    return Path(run_config.model_dir) / DENOISER_DIR


def load_train_images(run_config: RunConfig) -> List[np.ndarray]:
    return read_stack(data_dir(run_config) / TRAIN_HEALTHY)


def load_evaluation_set(run_config: RunConfig) -> EvaluationSet:
    """
    Images de test: saines puis pathologiques

    Les images saines reçoivent un masque vide; les identifiants indiquent
    le groupe (h0000..., a0000...).
    """
    directory = data_dir(run_config)
    healthy = read_stack(directory / TEST_HEALTHY)
    anomalous = read_stack(directory / TEST_ANOMALOUS)
    masks = read_stack(directory / TEST_MASKS)
    size = healthy[0].shape[1:] if healthy else masks[0].shape
    truths = [np.zeros(size, dtype=np.uint8) for _ in healthy] + [m.astype(np.uint8) for m in masks]
    ids = [f"h{i:04d}" for i in range(len(healthy))] + [f"a{i:04d}" for i in range(len(anomalous))]
    return EvaluationSet(images=healthy + anomalous, truths=truths, ids=ids)


def load_models(run_config: RunConfig) -> Tuple[Codec, ConvDenoiser, NoiseSchedule]:
    codec = load_codec(codec_dir(run_config))
    denoiser, schedule, _ = load_denoiser(denoiser_dir(run_config))
    return codec, denoiser, schedule


def load_input_images(path: Path) -> List[np.ndarray]:
    """Une image (c, h, w), une pile (N, c, h, w) ou une image (h, w)"""
    array = read_tensor(path).astype(np.float64)
    if array.ndim == 2:
        return [array[None]]
    if array.ndim == 3:
        return [array]
    return list(array)
