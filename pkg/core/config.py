"""
Core Configuration Module
Réglages du processus (environnement / .env) et configuration d'expérience
sérialisée en fichier clé-valeur plat
"""
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from core.errors import ConfigError


class StateBackend(str, Enum):
    """Backends pour le state manager"""
    SQLITE = "sqlite"
    FILE = "file"


class Config(BaseSettings):
    """Configuration globale de l'application"""
    model_config = SettingsConfigDict(
        env_prefix="BERNOULLI_AD_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application
    app_name: str = "Bernoulli Anomaly Detection"
    app_version: str = "0.1.0"
    debug: bool = False

    # Paths
    base_dir: Path = Field(default_factory=lambda: Path.cwd())
    data_dir: Path = Field(default_factory=lambda: Path.cwd() / "data")
    output_dir: Path = Field(default_factory=lambda: Path.cwd() / "output")

    # State Management
    state_backend: StateBackend = StateBackend.SQLITE
    state_db_path: Path = Field(default_factory=lambda: Path.cwd() / "data" / "runs.db")
    track_runs: bool = True

    def ensure_dirs(self) -> None:
        """Crée les répertoires de travail à la demande"""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.data_dir.mkdir(parents=True, exist_ok=True)


def parse_list(text: str, cast=float) -> List[Any]:
    """'0.3,0.5,0.7' → [0.3, 0.5, 0.7]"""
    items = [item.strip() for item in str(text).split(",") if item.strip()]
    if not items:
        raise ConfigError(f"empty list: '{text}'")
    try:
        return [cast(item) for item in items]
    except ValueError as e:
        raise ConfigError(f"invalid list '{text}': {e}") from e


class RunConfig(BaseModel):
    """
    Configuration d'une expérience

    Toutes les clés sont au premier niveau; les listes de la grille sont
    des chaînes séparées par des virgules. Valeurs par défaut: T=1000,
    Adam lr 1e-4, lot 32, L=200, P=0.5, filtre médian 5, seuil 0.5,
    composantes >= 10 pixels.
    """
    model_config = ConfigDict(extra="forbid")

    # planning de bruit
    schedule_kind: str = "linear"
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02

    # codec
    codec_kind: str = "bitplane"
    image_channels: int = 1
    latent_channels: int = 4
    compression: int = 4
    codec_hidden: int = 16

    # débruiteur
    denoiser_width: int = 16
    denoiser_blocks: int = 2
    kernel_size: int = 3
    time_embedding_dim: int = 32
    recentre_inputs: bool = True

    # entraînement
    learning_rate: float = 1e-4
    batch_size: int = 32
    iterations: int = 1000
    optimizer: str = "adam"
    checkpoint_every: int = 0
    ae_learning_rate: float = 1e-3
    ae_iterations: int = 1000

    # inférence et post-traitement
    L: int = 200
    P: float = 0.5
    binarize_mode: str = "sample"
    median_kernel: int = 5
    seg_threshold: float = 0.5
    min_component: int = 10
    normalize_map: bool = False

    # évaluation
    P_grid: str = "0.0,0.3,0.5,0.7"
    L_grid: str = "100,200,300"
    auprc_source: str = "raw"
    record_timing: bool = False

    # données synthétiques
    phantom_size: int = 64
    phantom_channels: int = 1
    n_train: int = 64
    n_test_healthy: int = 32
    n_test_anomalous: int = 32

    # chemins
    data_dir: str = "data/phantoms"
    model_dir: str = "output/models"
    output_dir: str = "output/results"

    @field_validator("P_grid", "L_grid", mode="before")
    @classmethod
    def _grid_as_text(cls, value: Any) -> Any:
        # une grille à un seul point arrive comme nombre depuis le YAML
        return str(value) if isinstance(value, (int, float)) and not isinstance(value, bool) else value

    @classmethod
    def from_file(cls, path: Path) -> "RunConfig":
        """
        Charge un fichier clé-valeur plat

        Raises:
            ConfigError: fichier illisible, valeur imbriquée ou clé inconnue
        """
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        return cls.from_mapping(data or {})

    @classmethod
    def from_mapping(cls, data: Any) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config file must be a flat key: value mapping")
        nested = [key for key, value in data.items() if isinstance(value, (dict, list))]
        if nested:
            raise ConfigError(f"nested values are not allowed: {', '.join(map(str, nested))}")
        try:
            return cls(**{str(key): value for key, value in data.items()})
        except ValidationError as e:
            raise ConfigError(_describe(e)) from e

    def dumps(self) -> str:
        return yaml.safe_dump(self.model_dump(), sort_keys=False, default_flow_style=False)

    def save(self, path: Path) -> Path:
        from core.tensor_io import atomic_write_text

        return atomic_write_text(Path(path), self.dumps())

    def override(self, **values: Optional[Any]) -> "RunConfig":
        """Applique les options de ligne de commande non vides"""
        updates = {key: value for key, value in values.items() if value is not None}
        return self.from_mapping({**self.model_dump(), **updates})

    # --------------------------------------------------------- typed views

    def schedule(self):
        from engine.schedule import build_schedule

        try:
            return build_schedule(self.schedule_kind, self.T, self.beta_start, self.beta_end)
        except ValueError as e:
            raise ConfigError(f"schedule: {e}") from e

    def codec_spec(self):
        from engine.codec import CodecSpec

        return self._typed(CodecSpec, kind=self.codec_kind, image_channels=self.image_channels,
                           latent_channels=self.latent_channels, compression=self.compression,
                           hidden_channels=self.codec_hidden)

    def architecture(self):
        from engine.denoiser import ArchitectureDescriptor

        return self._typed(ArchitectureDescriptor, latent_channels=self.latent_channels,
                           width=self.denoiser_width, blocks=self.denoiser_blocks,
                           kernel_size=self.kernel_size, time_embedding_dim=self.time_embedding_dim,
                           recentre_inputs=self.recentre_inputs)

    def train_config(self, seed: int):
        from engine.training import TrainConfig

        return self._typed(TrainConfig, learning_rate=self.learning_rate, batch_size=self.batch_size,
                           iterations=self.iterations, optimizer=self.optimizer,
                           checkpoint_every=self.checkpoint_every, seed=seed)

    def autoencoder_train_config(self, seed: int):
        from engine.training import TrainConfig

        return self._typed(TrainConfig, learning_rate=self.ae_learning_rate, batch_size=self.batch_size,
                           iterations=self.ae_iterations, optimizer=self.optimizer, seed=seed)

    def inference_config(self, seed: int, keep_trace: bool = False):
        from engine.anomaly import InferenceConfig

        return self._typed(InferenceConfig, L=self.L, P=self.P, binarize_mode=self.binarize_mode,
                           seed=seed, median_kernel=self.median_kernel,
                           seg_threshold=self.seg_threshold, min_component=self.min_component,
                           normalize_map=self.normalize_map, keep_trace=keep_trace)

    def phantom_spec(self):
        from engine.datagen import PhantomSpec

        return self._typed(PhantomSpec, size=self.phantom_size, channels=self.phantom_channels)

    def grid(self) -> Dict[str, List[Any]]:
        return {"P": parse_list(self.P_grid, float), "L": parse_list(self.L_grid, int)}

    @staticmethod
    def _typed(model, **values):
        try:
            return model(**values)
        except ValidationError as e:
            raise ConfigError(_describe(e)) from e


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(part) for part in item.get("loc", ())) or "config"
        parts.append(f"{location}: {item.get('msg')}")
    return "; ".join(parts)
