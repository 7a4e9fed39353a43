"""
Datagen Stage
Génère le jeu de données synthétique et ses aperçus
"""
from pathlib import Path

from core.stage_base import BaseStage, StageInput, StageOutput
from core.tensor_io import write_image_channels, write_pgm, write_stack
from engine.datagen import generate_anomalous, generate_healthy
from stages import artifacts

PREVIEW_COUNT = 4


class DatagenStage(BaseStage):
    """
    Étape de génération des données

    Responsabilités:
    - Fantômes sains d'entraînement et de test (flux disjoints)
    - Fantômes pathologiques et masques de vérité terrain
    - Aperçus PGM
    """

    def execute(self, stage_input: StageInput) -> StageOutput:
        rc = self.run_config
        spec = rc.phantom_spec()
        directory = Path(stage_input.context.get("data_dir") or artifacts.data_dir(rc))
        seed = stage_input.seed

        self.log(f"Generating phantoms {spec.size}x{spec.size}, {spec.channels} channel(s)")
        train = generate_healthy(spec, rc.n_train, seed, split="train")
        test_healthy = generate_healthy(spec, rc.n_test_healthy, seed, split="test")
        anomalous = generate_anomalous(spec, rc.n_test_anomalous, seed)

        write_stack(directory / artifacts.TRAIN_HEALTHY, train)
        write_stack(directory / artifacts.TEST_HEALTHY, test_healthy)
        write_stack(directory / artifacts.TEST_ANOMALOUS, [sample.image for sample in anomalous])
        write_stack(directory / artifacts.TEST_MASKS, [sample.mask for sample in anomalous])
        self.log_success(
            f"{len(train)} train / {len(test_healthy)} healthy test / {len(anomalous)} anomalous test"
        )

        previews = directory / artifacts.PREVIEWS
        for index, image in enumerate(train[:PREVIEW_COUNT]):
            write_image_channels(previews, f"train_{index:02d}", image)
        for index, sample in enumerate(anomalous[:PREVIEW_COUNT]):
            write_image_channels(previews, f"anomalous_{index:02d}", sample.image)
            write_pgm(previews / f"anomalous_{index:02d}_mask.pgm", sample.mask)
        self.log_info(f"Previews written to {previews}")

        return StageOutput(
            stage_name=self.stage_name,
            success=True,
            data={
                "data_dir": str(directory),
                "n_train": len(train),
                "n_test_healthy": len(test_healthy),
                "n_test_anomalous": len(anomalous),
                "summary": f"{len(train) + len(test_healthy) + len(anomalous)} images",
            },
        )
