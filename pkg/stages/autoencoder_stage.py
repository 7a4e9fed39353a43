"""
Autoencoder Stage
Prépare le codec: enregistre le codec par plans de bits ou entraîne
l'autoencodeur binarisant
"""
from core.stage_base import BaseStage, StageInput, StageOutput
from core.tensor_io import write_csv
from engine.checkpoint import save_codec
from engine.codec import BitplaneCodec, CodecKind, train_autoencoder
from stages import artifacts


class AutoencoderStage(BaseStage):
    """Étape codec (train-ae)"""

    def execute(self, stage_input: StageInput) -> StageOutput:
        rc = self.run_config
        spec = rc.codec_spec()
        target = artifacts.codec_dir(rc)

        if spec.kind == CodecKind.BITPLANE:
            save_codec(target, BitplaneCodec(spec))
            self.log_info(f"Bit-plane codec needs no training ({spec.bits_per_pixel} bits/pixel)")
            return StageOutput(
                stage_name=self.stage_name,
                success=True,
                data={"codec_dir": str(target), "kind": spec.kind.value, "summary": "bitplane"},
            )

        images = artifacts.load_train_images(rc)
        train_config = rc.autoencoder_train_config(stage_input.seed)
        self.log(f"Training autoencoder on {len(images)} images, {train_config.iterations} iterations")
        with self.progress(train_config.iterations, "autoencoder") as advance:
            result = train_autoencoder(images, spec, train_config, on_iteration=advance)

        history = result.loss_history
        save_codec(target, result.model, iteration=len(history), seed=stage_input.seed)
        write_csv(
            target / "loss.csv",
            ["iteration", "mse"],
            ({"iteration": str(i + 1), "mse": f"{loss:.8f}"} for i, loss in enumerate(history)),
        )
        self.log_success(f"MSE {history[0]:.5f} → {history[-1]:.5f}")

        return StageOutput(
            stage_name=self.stage_name,
            success=True,
            data={
                "codec_dir": str(target),
                "kind": spec.kind.value,
                "initial_mse": history[0],
                "final_mse": history[-1],
                "summary": f"MSE {history[-1]:.5f}",
            },
        )
