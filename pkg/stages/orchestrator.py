"""
Pipeline Orchestrator
Étape principale qui enchaîne génération, codec, entraînement et évaluation
"""
from typing import Any, Dict, List

from rich.panel import Panel
from rich.table import Table

from core.stage_base import BaseStage, StageInput, StageOutput

PIPELINE_STEPS = [
    ("datagen", "Génération des données"),
    ("autoencoder", "Préparation du codec"),
    ("diffusion", "Entraînement du débruiteur"),
    ("evaluation", "Recherche sur grille"),
]


class PipelineOrchestrator(BaseStage):
    """
    Orchestrateur du pipeline complet

    Responsabilités:
    - Exécuter les étapes enregistrées dans l'ordre
    - Transmettre les sorties d'une étape aux suivantes
    - Arrêter le pipeline si une étape échoue
    - Fournir un résumé final
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.stages_registry: Dict[str, BaseStage] = {}

    def register_stage(self, name: str, stage: BaseStage) -> None:
        self.stages_registry[name] = stage
        self.log(f"Stage registered: {name}")

    def execute(self, stage_input: StageInput) -> StageOutput:
        errors: List[str] = []
        outputs: Dict[str, Any] = {}
        self._display_banner(stage_input)

        for name, description in PIPELINE_STEPS:
            if name not in self.stages_registry:
                errors.append(f"Stage '{name}' not registered")
                self.log_error(errors[-1])
                break

            self.console.print(f"\n[bold cyan]📋 Étape: {description}[/bold cyan]")
            step_input = StageInput(
                run_id=stage_input.run_id,
                seed=stage_input.seed,
                context=stage_input.context.get(name, {}),
                previous_outputs=dict(outputs),
            )
            result = self.stages_registry[name].run(step_input)
            outputs[name] = {**result.data, "success": result.success}

            if not result.success:
                errors.extend(result.errors)
                self.log_error(f"Stage '{name}' failed, stopping pipeline")
                break
            self.log_success(f"{description} terminée")

        success = not errors
        self._display_summary(success, outputs, errors)
        return StageOutput(stage_name=self.stage_name, success=success, data=outputs, errors=errors)

    def _display_banner(self, stage_input: StageInput) -> None:
        rc = self.run_config
        banner = (
            f"[bold cyan]Pipeline[/bold cyan]  run {stage_input.run_id}\n\n"
            f"  • Seed: [green]{stage_input.seed}[/green]\n"
            f"  • Schedule: {rc.schedule_kind}, T={rc.T}\n"
            f"  • Codec: {rc.codec_kind}, {rc.latent_channels} latent channels, k={rc.compression}\n"
            f"  • Grid: P ∈ {{{rc.P_grid}}}, L ∈ {{{rc.L_grid}}}"
        )
        self.console.print(Panel(banner, border_style="cyan"))

    def _display_summary(self, success: bool, outputs: Dict[str, Any], errors: List[str]) -> None:
        status_icon = "✅" if success else "❌"
        table = Table(title=f"\n{status_icon} Pipeline summary")
        table.add_column("Stage", style="cyan")
        table.add_column("Status")
        table.add_column("Details", style="dim")
        for name, data in outputs.items():
            table.add_row(name, "✓" if data.get("success") else "✗", str(data.get("summary", "N/A")))
        self.console.print(table)
        for error in errors:
            self.console.print(f"  [red]• {error}[/red]")
