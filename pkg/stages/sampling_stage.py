"""
Sampling Stage
Échantillonnage inconditionnel: ce que le modèle a appris comme « sain »
"""
from pathlib import Path

from core.rng import RngStream
from core.stage_base import BaseStage, StageInput, StageOutput
from core.tensor_io import write_image_channels, write_stack
from engine.diffusion import generate
from stages import artifacts


class SamplingStage(BaseStage):
    """Étape sample"""

    def execute(self, stage_input: StageInput) -> StageOutput:
        rc = self.run_config
        count = int(stage_input.context.get("count", 4))
        out_dir = Path(stage_input.context.get("out_dir") or Path(rc.output_dir) / "samples")
        codec, denoiser, schedule = artifacts.load_models(rc)

        shape = (rc.latent_channels, rc.phantom_size // rc.compression, rc.phantom_size // rc.compression)
        root = RngStream(stage_input.seed).derive("sample")
        images = []
        for index in range(count):
            latent = generate(denoiser, shape, schedule, root.derive(index))
            image = codec.decode(latent)
            images.append(image)
            write_image_channels(out_dir, f"sample_{index:03d}", image)
        write_stack(out_dir / "samples.bdt", images)
        self.log_success(f"{count} samples written to {out_dir}")

        return StageOutput(
            stage_name=self.stage_name,
            success=True,
            data={"out_dir": str(out_dir), "count": count, "summary": f"{count} samples"},
        )
