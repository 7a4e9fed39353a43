"""
Evaluation Stage
Évaluation d'un point (P, L) ou recherche sur grille, avec export CSV
"""
from pathlib import Path
from typing import List

from rich.table import Table

from core.stage_base import BaseStage, StageInput, StageOutput
from core.tensor_io import write_csv
from engine.anomaly import InferenceConfig
from engine.evaluation import (
    CELL_FIELDS,
    IMAGE_FIELDS,
    SEPARATION_FIELDS,
    AuprcSource,
    GridCell,
    GridSearchResult,
    grid_search,
)
from stages import artifacts


def _show(value) -> str:
    return "-" if value is None else f"{value:.4f}"


class EvaluationStage(BaseStage):
    """
    Étape eval / gridsearch

    Contexte:
    - P_values, L_values: grille (par défaut le point (P, L) de la configuration)
    - out_dir: répertoire des CSV
    """

    def execute(self, stage_input: StageInput) -> StageOutput:
        rc = self.run_config
        context = stage_input.context
        P_values: List[float] = list(context.get("P_values") or [rc.P])
        L_values: List[int] = list(context.get("L_values") or [rc.L])
        out_dir = Path(context.get("out_dir") or rc.output_dir)

        codec, denoiser, schedule = artifacts.load_models(rc)
        dataset = artifacts.load_evaluation_set(rc)
        base: InferenceConfig = rc.inference_config(stage_input.seed)
        self.log(
            f"Evaluating {len(dataset)} images over {len(P_values)}x{len(L_values)} grid cell(s)"
        )

        def report(cell: GridCell) -> None:
            self.log_info(
                f"P={cell.P:g} L={cell.L}: dice {cell.mean_dice:.4f} ± {cell.std_dice:.4f}, "
                f"mask {cell.mean_mask_fraction:.2f}%"
            )

        result = grid_search(
            dataset,
            codec,
            denoiser,
            schedule,
            P_values,
            L_values,
            stage_input.seed,
            base=base,
            auprc_source=AuprcSource(rc.auprc_source),
            record_timing=rc.record_timing,
            on_cell=report,
        )
        paths = self._write(out_dir, result)
        self._display(result)
        best = result.best()

        return StageOutput(
            stage_name=self.stage_name,
            success=True,
            data={
                **{name: str(path) for name, path in paths.items()},
                "best_P": best.P,
                "best_L": best.L,
                "best_dice": best.mean_dice,
                "cells": len(result.cells),
                "summary": f"best dice {best.mean_dice:.4f} at P={best.P:g}, L={best.L}",
            },
        )

    @staticmethod
    def _write(out_dir: Path, result: GridSearchResult) -> dict:
        return {
            "per_image_csv": write_csv(
                out_dir / "per_image.csv", IMAGE_FIELDS, (row.as_csv(P, L) for P, L, row in result.rows)
            ),
            "grid_csv": write_csv(out_dir / "grid.csv", CELL_FIELDS, (c.as_csv() for c in result.cells)),
            "mask_scores_csv": write_csv(
                out_dir / "mask_scores.csv", SEPARATION_FIELDS, (c.separation_csv() for c in result.cells)
            ),
        }

    def _display(self, result: GridSearchResult) -> None:
        table = Table(title="Grid search")
        for column in ("P", "L", "Dice", "± std", "AUPRC", "PSNR", "mask %", "AUROC(mask)"):
            table.add_column(column, justify="right")
        best = result.best()
        for cell in result.cells:
            style = "bold green" if cell is best else None
            table.add_row(
                f"{cell.P:g}",
                str(cell.L),
                _show(cell.mean_dice),
                _show(cell.std_dice),
                _show(cell.mean_auprc),
                f"{cell.mean_psnr:.2f}",
                f"{cell.mean_mask_fraction:.2f}",
                _show(cell.separation.auroc),
                style=style,
            )
        self.console.print(table)
