"""
Checkpoint Module
Sauvegarde et rechargement des modèles: un répertoire par modèle contenant
un manifeste YAML et les tenseurs au format BDT1
"""
from pathlib import Path
from typing import Any, Dict, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, Field

from core.errors import ContainerFormatError
from core.tensor_io import atomic_write_text, read_tensor, write_tensor
from engine.codec import BitplaneCodec, Codec, CodecKind, CodecSpec, LearnedCodec
from engine.denoiser import ArchitectureDescriptor, ConvDenoiser
from engine.schedule import NoiseSchedule, ScheduleKind

MANIFEST = "manifest.yaml"
PARAMETERS = "parameters.bdt"
BETAS = "betas.bdt"


class DenoiserManifest(BaseModel):
    """Contenu du manifeste d'un débruiteur"""
    architecture: ArchitectureDescriptor
    schedule_kind: ScheduleKind
    T: int
    beta_start: float | None = None
    beta_end: float | None = None
    iteration: int = 0
    seed: int = 0
    loss_tail: list[float] = Field(default_factory=list)


class CodecManifest(BaseModel):
    """Contenu du manifeste d'un codec"""
    spec: CodecSpec
    iteration: int = 0
    seed: int = 0


def _write_manifest(directory: Path, payload: Dict[str, Any]) -> None:
    atomic_write_text(directory / MANIFEST, yaml.safe_dump(payload, sort_keys=False))


def _read_manifest(directory: Path) -> Dict[str, Any]:
    path = Path(directory) / MANIFEST
    if not path.exists():
        raise ContainerFormatError(f"no checkpoint manifest in {directory}")
    data = yaml.safe_load(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ContainerFormatError(f"malformed checkpoint manifest {path}")
    return data


def save_denoiser(
    directory: Path,
    denoiser: ConvDenoiser,
    schedule: NoiseSchedule,
    iteration: int = 0,
    seed: int = 0,
    loss_tail: list[float] | None = None,
) -> Path:
    """
    Écrit le débruiteur et son planning

    Le planning est stocké à la fois par ses arguments de construction et
    par la table β, ce qui couvre aussi les plannings personnalisés.
    """
    directory = Path(directory)
    manifest = DenoiserManifest(
        architecture=denoiser.architecture,
        schedule_kind=schedule.kind,
        T=schedule.T,
        beta_start=schedule.beta_start,
        beta_end=schedule.beta_end,
        iteration=iteration,
        seed=seed,
        loss_tail=list(loss_tail or []),
    )
    write_tensor(directory / PARAMETERS, denoiser.params.vector)
    write_tensor(directory / BETAS, np.asarray(schedule.beta))
    _write_manifest(directory, manifest.model_dump(mode="json"))
    return directory


def load_denoiser(directory: Path) -> Tuple[ConvDenoiser, NoiseSchedule, DenoiserManifest]:
    directory = Path(directory)
    manifest = DenoiserManifest.model_validate(_read_manifest(directory))
    model = ConvDenoiser(manifest.architecture)
    model.params.load(read_tensor(directory / PARAMETERS))
    schedule = NoiseSchedule.from_betas(
        read_tensor(directory / BETAS), manifest.schedule_kind, manifest.beta_start, manifest.beta_end
    )
    if schedule.T != manifest.T:
        raise ContainerFormatError(f"checkpoint schedule has {schedule.T} steps, manifest says {manifest.T}")
    return model, schedule, manifest


def save_codec(directory: Path, codec: Codec, iteration: int = 0, seed: int = 0) -> Path:
    directory = Path(directory)
    manifest = CodecManifest(spec=codec.spec, iteration=iteration, seed=seed)
    if isinstance(codec, LearnedCodec):
        write_tensor(directory / PARAMETERS, codec.params.vector)
    _write_manifest(directory, manifest.model_dump(mode="json"))
    return directory


def load_codec(directory: Path) -> Codec:
    directory = Path(directory)
    manifest = CodecManifest.model_validate(_read_manifest(directory))
    if manifest.spec.kind == CodecKind.BITPLANE:
        return BitplaneCodec(manifest.spec)
    codec = LearnedCodec(manifest.spec)
    codec.params.load(read_tensor(directory / PARAMETERS))
    return codec
