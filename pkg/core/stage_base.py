"""
Stage Base Module
Classe de base abstraite pour toutes les étapes du pipeline
"""
import uuid
from abc import ABC, abstractmethod
from contextlib import contextmanager
from typing import Any, Callable, Dict, Iterator, List

from pydantic import BaseModel, Field
from rich.console import Console
from rich.progress import BarColumn, Progress, TextColumn, TimeElapsedColumn

from core.config import Config, RunConfig
from core.state_manager import StageExecution, StageStatus, utcnow

console = Console()


class StageInput(BaseModel):
    """Input standardisé pour une étape"""
    run_id: str
    seed: int
    context: Dict[str, Any] = Field(default_factory=dict)
    previous_outputs: Dict[str, Any] = Field(default_factory=dict)


class StageOutput(BaseModel):
    """Output standardisé d'une étape"""
    stage_name: str
    success: bool
    data: Dict[str, Any] = Field(default_factory=dict)
    errors: List[str] = Field(default_factory=list)
    logs: List[str] = Field(default_factory=list)
    execution_time: float = 0.0


class BaseStage(ABC):
    """
    Classe de base abstraite pour toutes les étapes

    Chaque étape implémente `execute()`; `run()` ajoute la mesure du temps,
    l'enregistrement dans le state manager et la capture des erreurs.
    """

    def __init__(self, config: Config, run_config: RunConfig, state_manager):
        self.config = config
        self.run_config = run_config
        self.state_manager = state_manager
        self.stage_name = self.__class__.__name__
        self.console = console

    @abstractmethod
    def execute(self, stage_input: StageInput) -> StageOutput:
        """
        Logique principale de l'étape

        Args:
            stage_input: run, graine, contexte et sorties des étapes précédentes

        Returns:
            StageOutput: résultat de l'étape
        """

    def run(self, stage_input: StageInput) -> StageOutput:
        """
        Wrapper autour de execute() qui gère le logging et le state management

        Args:
            stage_input: Input pour l'étape

        Returns:
            StageOutput: Output de l'étape (success=False si une exception a été levée)
        """
        execution_id = str(uuid.uuid4())
        start_time = utcnow()
        self._log_start(execution_id)

        execution = StageExecution(
            execution_id=execution_id,
            run_id=stage_input.run_id,
            stage_name=self.stage_name,
            status=StageStatus.RUNNING,
            started_at=start_time,
            input_data=stage_input.model_dump(mode="json"),
        )
        self.state_manager.create_execution(execution)

        try:
            output = self.execute(stage_input)
            end_time = utcnow()
            output.execution_time = (end_time - start_time).total_seconds()

            execution.status = StageStatus.SUCCESS if output.success else StageStatus.FAILED
            execution.completed_at = end_time
            execution.output_data = output.model_dump(mode="json")
            execution.logs = output.logs
            execution.error_message = "\n".join(output.errors) if output.errors else None
            self.state_manager.update_execution(execution)

            self._log_end(output)
            return output

        except Exception as e:
            end_time = utcnow()
            error_msg = f"Stage {self.stage_name} failed: {type(e).__name__}: {e}"

            execution.status = StageStatus.FAILED
            execution.completed_at = end_time
            execution.error_message = error_msg
            self.state_manager.update_execution(execution)

            self._log_error(str(e))
            if self.config.debug:
                self.console.print_exception()

            return StageOutput(
                stage_name=self.stage_name,
                success=False,
                errors=[error_msg],
                execution_time=(end_time - start_time).total_seconds(),
            )

    def _log_start(self, execution_id: str) -> None:
        self.console.print(
            f"\n[bold cyan]▶ {self.stage_name}[/bold cyan] "
            f"[dim](Execution: {execution_id[:8]}...)[/dim]"
        )

    def _log_end(self, output: StageOutput) -> None:
        status_icon = "✅" if output.success else "❌"
        status_color = "green" if output.success else "red"
        self.console.print(
            f"{status_icon} [bold {status_color}]{self.stage_name}[/bold {status_color}] "
            f"completed in {output.execution_time:.2f}s"
        )
        for error in output.errors:
            self.console.print(f"  [red]Error: {error}[/red]")

    def _log_error(self, error: str) -> None:
        self.console.print(f"[bold red]❌ {self.stage_name} failed[/bold red]\n  [red]{error}[/red]")

    def log(self, message: str, style: str = "dim") -> None:
        """
        Log un message avec style

        Args:
            message: Message à logger
            style: Style Rich (ex: 'bold', 'dim', 'red', etc.)
        """
        self.console.print(f"  [{style}]{message}[/{style}]")

    def log_success(self, message: str) -> None:
        self.console.print(f"  [green]✓ {message}[/green]")

    def log_error(self, message: str) -> None:
        self.console.print(f"  [red]✗ {message}[/red]")

    def log_warning(self, message: str) -> None:
        self.console.print(f"  [yellow]⚠ {message}[/yellow]")

    def log_info(self, message: str) -> None:
        self.console.print(f"  [blue]ℹ {message}[/blue]")

    @contextmanager
    def progress(self, total: int, description: str) -> Iterator[Callable[[int, float], None]]:
        """
        Barre de progression pour les boucles d'entraînement

        Yields:
            callback(iteration, loss) à passer au moteur
        """
        columns = (
            TextColumn("  {task.description}"),
            BarColumn(),
            TextColumn("{task.completed}/{task.total}"),
            TextColumn("loss {task.fields[loss]:.5f}"),
            TimeElapsedColumn(),
        )
        with Progress(*columns, console=self.console, transient=True) as bar:
            task = bar.add_task(description, total=total, loss=float("nan"))

            def advance(iteration: int, loss: float) -> None:
                bar.update(task, completed=iteration, loss=loss)

            yield advance
