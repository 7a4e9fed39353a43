"""
Pipeline stages
"""
from stages.autoencoder_stage import AutoencoderStage
from stages.datagen_stage import DatagenStage
from stages.detection_stage import DetectionStage
from stages.diffusion_training_stage import DiffusionTrainingStage
from stages.evaluation_stage import EvaluationStage
from stages.orchestrator import PipelineOrchestrator
from stages.sampling_stage import SamplingStage

__all__ = [
    "AutoencoderStage",
    "DatagenStage",
    "DetectionStage",
    "DiffusionTrainingStage",
    "EvaluationStage",
    "PipelineOrchestrator",
    "SamplingStage",
]
