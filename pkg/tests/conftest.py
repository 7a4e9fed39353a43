"""
Fixtures partagées par la suite de tests
"""
from pathlib import Path

import numpy as np
import pytest

from core.rng import RngStream
from engine.codec import BitplaneCodec, CodecKind, CodecSpec
from engine.datagen import PhantomSpec
from engine.denoiser import ArchitectureDescriptor, ConvDenoiser
from engine.schedule import build_schedule


@pytest.fixture
def rng() -> RngStream:
    return RngStream(1234)


@pytest.fixture
def short_schedule():
    """Planning court pour garder les chaînes rapides"""
    return build_schedule("linear", T=50, beta_start=1e-4, beta_end=0.1)


@pytest.fixture
def bitplane_codec() -> BitplaneCodec:
    return BitplaneCodec(CodecSpec(kind=CodecKind.BITPLANE, latent_channels=4, compression=4))


@pytest.fixture
def small_phantoms() -> PhantomSpec:
    return PhantomSpec(size=32, blob_radius=(2.0, 4.0))


@pytest.fixture
def tiny_architecture() -> ArchitectureDescriptor:
    """Réseau de quelques centaines de paramètres (vérification du gradient)"""
    return ArchitectureDescriptor(
        latent_channels=1, width=4, blocks=1, kernel_size=3, time_embedding_dim=4
    )


@pytest.fixture
def tiny_denoiser(tiny_architecture) -> ConvDenoiser:
    model = ConvDenoiser.initialize(tiny_architecture, RngStream(7).derive("init"))
    # sortie non nulle pour que tous les gradients soient informatifs
    out = model.params.view("conv_out.w")
    out[...] = RngStream(8).uniform(-0.3, 0.3, size=out.shape)
    return model


@pytest.fixture
def random_bits():
    def make(shape, seed: int = 0, p: float = 0.5) -> np.ndarray:
        return (RngStream(seed).random(shape) < p).astype(np.uint8)

    return make


@pytest.fixture
def workspace(tmp_path: Path, monkeypatch) -> Path:
    """Répertoire de travail isolé (runs.db, données et modèles sous tmp_path)"""
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("BERNOULLI_AD_STATE_DB_PATH", str(tmp_path / "state" / "runs.db"))
    monkeypatch.setenv("BERNOULLI_AD_DATA_DIR", str(tmp_path / "state"))
    return tmp_path
