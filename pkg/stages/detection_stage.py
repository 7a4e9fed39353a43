"""
Detection Stage
Inférence masquée sur des images d'entrée et écriture des cartes
"""
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from core.errors import ShapeMismatchError
from core.stage_base import BaseStage, StageInput, StageOutput
from core.tensor_io import display_normalize, read_tensor, write_csv, write_image_channels, write_pgm
from engine.anomaly import AnomalyResult, decode_trace, masked_inference
from engine.evaluation import dice, image_seed, psnr
from engine.layers import upsample
from stages import artifacts

DETECT_FIELDS = ["image_id", "mask_fraction", "dice", "psnr"]


def mask_preview(result: AnomalyResult, compression: int) -> np.ndarray:
    """Part des canaux latents masqués, ramenée à la taille de l'image"""
    coverage = result.mask.astype(np.float64).mean(axis=0)
    return upsample(coverage[None, None], compression)[0, 0]


class DetectionStage(BaseStage):
    """Étape detect"""

    def execute(self, stage_input: StageInput) -> StageOutput:
        rc = self.run_config
        context = stage_input.context
        out_dir = Path(context["out_dir"])
        images = artifacts.load_input_images(Path(context["input"]))
        truths = self._load_truths(context.get("truth"), len(images))
        keep_trace = bool(context.get("trace", False))
        codec, denoiser, schedule = artifacts.load_models(rc)

        self.log(f"Detecting anomalies in {len(images)} image(s), L={rc.L}, P={rc.P}")
        rows: List[Dict[str, str]] = []
        fractions: List[float] = []
        for index, image in enumerate(images):
            image_id = f"img{index:04d}"
            cfg = rc.inference_config(image_seed(stage_input.seed, index), keep_trace=keep_trace)
            result = masked_inference(image, codec, denoiser, schedule, cfg)
            fractions.append(result.mask_fraction)

            write_image_channels(out_dir, f"{image_id}_reconstruction", result.reconstruction)
            write_pgm(out_dir / f"{image_id}_anomaly.pgm", display_normalize(result.anomaly_map))
            write_pgm(out_dir / f"{image_id}_mask.pgm", mask_preview(result, codec.spec.compression))
            write_pgm(out_dir / f"{image_id}_segmentation.pgm", result.segmentation)
            if keep_trace:
                for t, frame in decode_trace(codec, result):
                    write_image_channels(out_dir / "trace" / image_id, f"t_{t:04d}", frame)

            truth = truths[index] if truths is not None else None
            rows.append({
                "image_id": image_id,
                "mask_fraction": f"{result.mask_fraction:.6f}",
                "dice": "" if truth is None else f"{dice(result.segmentation, truth):.6f}",
                "psnr": f"{psnr(image, result.reconstruction):.6f}",
            })
            self.log_info(f"{image_id}: mask {result.mask_fraction:.2f}%, {int(result.segmentation.sum())} px segmented")

        write_csv(out_dir / "metrics.csv", DETECT_FIELDS, rows)
        self.log_success(f"Results written to {out_dir}")

        return StageOutput(
            stage_name=self.stage_name,
            success=True,
            data={
                "out_dir": str(out_dir),
                "images": len(images),
                "mean_mask_fraction": float(np.mean(fractions)),
                "summary": f"{len(images)} image(s)",
            },
        )

    @staticmethod
    def _load_truths(path: Optional[str], count: int) -> Optional[List[np.ndarray]]:
        if not path:
            return None
        truth = read_tensor(Path(path))
        truths = [truth] if truth.ndim == 2 else list(truth)
        if len(truths) != count:
            raise ShapeMismatchError((count,), (len(truths),), "ground-truth mask list")
        return truths
