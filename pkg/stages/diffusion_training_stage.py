"""
Diffusion Training Stage
Encode les images saines et entraîne le débruiteur de Bernoulli
"""
from core.rng import RngStream
from core.stage_base import BaseStage, StageInput, StageOutput
from core.tensor_io import write_csv
from engine.checkpoint import load_codec, save_denoiser
from engine.codec import encode_dataset
from engine.denoiser import ConvDenoiser
from engine.training import train_diffusion
from stages import artifacts

# pertes conservées dans le manifeste
LOSS_TAIL = 100


class DiffusionTrainingStage(BaseStage):
    """Étape d'entraînement du débruiteur (train-diffusion)"""

    def execute(self, stage_input: StageInput) -> StageOutput:
        rc = self.run_config
        seed = stage_input.seed
        schedule = rc.schedule()
        codec = load_codec(artifacts.codec_dir(rc))
        images = artifacts.load_train_images(rc)

        latents = encode_dataset(codec, images, rc.binarize_mode, seed)
        self.log(f"Encoded {len(latents)} images to latents of shape {latents[0].shape}")

        architecture = rc.architecture()
        denoiser = ConvDenoiser.initialize(architecture, RngStream(seed).derive("denoiser-init"))
        self.log_info(f"Denoiser: {architecture.parameter_count()} parameters, T={schedule.T}")

        target = artifacts.denoiser_dir(rc)

        def checkpoint(iteration: int, model) -> None:
            save_denoiser(target / "checkpoints" / f"iter_{iteration:06d}", model, schedule, iteration, seed)

        train_config = rc.train_config(seed)
        with self.progress(train_config.iterations, "diffusion") as advance:
            result = train_diffusion(latents, denoiser, schedule, train_config, advance, checkpoint)

        history = result.loss_history
        save_denoiser(target, result.model, schedule, len(history), seed, history[-LOSS_TAIL:])
        write_csv(
            target / "loss.csv",
            ["iteration", "bce"],
            ({"iteration": str(i + 1), "bce": f"{loss:.8f}"} for i, loss in enumerate(history)),
        )
        self.log_success(f"BCE {history[0]:.5f} → {history[-1]:.5f}")

        return StageOutput(
            stage_name=self.stage_name,
            success=True,
            data={
                "denoiser_dir": str(target),
                "parameters": architecture.parameter_count(),
                "initial_loss": history[0],
                "final_loss": history[-1],
                "summary": f"BCE {history[-1]:.5f}",
            },
        )
