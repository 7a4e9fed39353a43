#!/usr/bin/env python3
"""
Bernoulli Anomaly Detection - Main Entry Point
Détection d'anomalies non supervisée par diffusion de Bernoulli masquée
dans un espace latent binaire
"""
import sys
import uuid
from pathlib import Path
from typing import Any, Dict, List, Optional, Type

import click
import typer
from rich.console import Console
from rich.panel import Panel

from core.config import Config, RunConfig, parse_list
from core.errors import BernoulliADError, ConfigError
from core.stage_base import BaseStage, StageInput, StageOutput
from core.state_manager import RunState, RunStatus, make_state_manager
from core.tensor_io import write_csv
from stages import (
    AutoencoderStage,
    DatagenStage,
    DetectionStage,
    DiffusionTrainingStage,
    EvaluationStage,
    PipelineOrchestrator,
    SamplingStage,
)

app = typer.Typer(
    name="bernoulli-ad",
    help="Détection d'anomalies par diffusion de Bernoulli masquée",
    add_completion=False,
    no_args_is_help=True,
)
console = Console()

EXIT_USAGE = 1
EXIT_RUNTIME = 2

ConfigOption = typer.Option(None, "--config", "-c", help="Flat key: value config file")
SeedOption = typer.Option(..., "--seed", help="Random seed (required)")


def load_run_config(path: Optional[Path], **overrides: Any) -> RunConfig:
    """
    Charge la configuration et applique les options de la ligne de commande

    Raises:
        typer.Exit: code 1 si la configuration est invalide
    """
    try:
        base = RunConfig.from_file(path) if path else RunConfig()
        return base.override(**overrides)
    except ConfigError as e:
        console.print(f"[red]Invalid configuration: {e}[/red]")
        raise typer.Exit(EXIT_USAGE) from e


def announce_seed(seed: int) -> None:
    console.print(f"[dim]seed: {seed}[/dim]")


def run_stage(
    command: str,
    stage_cls: Type[BaseStage],
    run_config: RunConfig,
    seed: Optional[int],
    context: Optional[Dict[str, Any]] = None,
    build=None,
) -> StageOutput:
    """
    Exécute une étape dans un run suivi

    Args:
        command: nom de la sous-commande
        stage_cls: classe de l'étape
        run_config: configuration de l'expérience
        seed: graine (None pour les commandes déterministes)
        context: contexte passé à l'étape
        build: fabrique optionnelle (config, run_config, state_manager) -> étape

    Returns:
        StageOutput: sortie de l'étape; code de sortie 2 en cas d'échec
    """
    config = Config()
    state_manager = make_state_manager(config)
    run = RunState(
        run_id=f"{command}-{uuid.uuid4().hex[:8]}",
        command=command,
        seed=seed,
        status=RunStatus.RUNNING,
        config=run_config.model_dump(),
    )
    state_manager.create_run(run)

    stage = build(config, run_config, state_manager) if build else stage_cls(config, run_config, state_manager)
    output = stage.run(StageInput(run_id=run.run_id, seed=seed or 0, context=context or {}))

    run.status = RunStatus.COMPLETED if output.success else RunStatus.FAILED
    run.outputs = output.data
    run.errors = output.errors
    state_manager.update_run(run)

    if not output.success:
        raise typer.Exit(EXIT_RUNTIME)
    return output


@app.command()
def datagen(
    config: Optional[Path] = ConfigOption,
    seed: int = SeedOption,
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Dataset directory"),
    n_train: Optional[int] = typer.Option(None, "--n-train", help="Healthy training images"),
    n_test_healthy: Optional[int] = typer.Option(None, "--n-test-healthy"),
    n_test_anomalous: Optional[int] = typer.Option(None, "--n-test-anomalous"),
    size: Optional[int] = typer.Option(None, "--size", help="Phantom side length"),
    channels: Optional[int] = typer.Option(None, "--channels", help="Image channels"),
) -> None:
    """
    Générer le jeu de données synthétique
    """
    rc = load_run_config(
        config,
        data_dir=str(out) if out else None,
        n_train=n_train,
        n_test_healthy=n_test_healthy,
        n_test_anomalous=n_test_anomalous,
        phantom_size=size,
        phantom_channels=channels,
        image_channels=channels,
    )
    announce_seed(seed)
    run_stage("datagen", DatagenStage, rc, seed)


@app.command("train-ae")
def train_ae(
    config: Optional[Path] = ConfigOption,
    seed: int = SeedOption,
    iterations: Optional[int] = typer.Option(None, "--iterations", help="Autoencoder iterations"),
) -> None:
    """
    Préparer le codec (entraîne l'autoencodeur si codec_kind=learned)
    """
    rc = load_run_config(config, ae_iterations=iterations)
    announce_seed(seed)
    run_stage("train-ae", AutoencoderStage, rc, seed)


@app.command("train-diffusion")
def train_diffusion(
    config: Optional[Path] = ConfigOption,
    seed: int = SeedOption,
    iterations: Optional[int] = typer.Option(None, "--iterations", help="Training iterations"),
    learning_rate: Optional[float] = typer.Option(None, "--lr", help="Learning rate"),
) -> None:
    """
    Entraîner le débruiteur de Bernoulli sur les images saines
    """
    rc = load_run_config(config, iterations=iterations, learning_rate=learning_rate)
    announce_seed(seed)
    run_stage("train-diffusion", DiffusionTrainingStage, rc, seed)


@app.command()
def sample(
    config: Optional[Path] = ConfigOption,
    seed: int = SeedOption,
    count: int = typer.Option(4, "--count", "-n", help="Number of samples"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
) -> None:
    """
    Échantillonner des images « saines » depuis le modèle
    """
    rc = load_run_config(config)
    announce_seed(seed)
    run_stage("sample", SamplingStage, rc, seed, {"count": count, "out_dir": str(out) if out else None})


@app.command()
def detect(
    config: Optional[Path] = ConfigOption,
    input_path: Path = typer.Option(..., "--input", "-i", help="Image tensor (.bdt)"),
    out: Path = typer.Option(..., "--out", "-o", help="Output directory"),
    seed: int = SeedOption,
    truth: Optional[Path] = typer.Option(None, "--truth", help="Ground-truth mask tensor (.bdt)"),
    noise_level: Optional[int] = typer.Option(None, "--L", help="Noise level L"),
    threshold: Optional[float] = typer.Option(None, "--P", help="Flip probability threshold P"),
    trace: bool = typer.Option(False, "--trace", help="Write per-step reconstructions"),
) -> None:
    """
    Détecter les anomalies d'une ou plusieurs images
    """
    rc = load_run_config(config, L=noise_level, P=threshold)
    announce_seed(seed)
    context = {
        "input": str(input_path),
        "out_dir": str(out),
        "truth": str(truth) if truth else None,
        "trace": trace,
    }
    run_stage("detect", DetectionStage, rc, seed, context)


@app.command("eval")
def evaluate(
    config: Optional[Path] = ConfigOption,
    seed: int = SeedOption,
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    noise_level: Optional[int] = typer.Option(None, "--L", help="Noise level L"),
    threshold: Optional[float] = typer.Option(None, "--P", help="Flip probability threshold P"),
) -> None:
    """
    Évaluer le point (P, L) de la configuration sur le jeu de test
    """
    rc = load_run_config(config, L=noise_level, P=threshold)
    announce_seed(seed)
    run_stage("eval", EvaluationStage, rc, seed, {"out_dir": str(out) if out else None})


@app.command()
def gridsearch(
    config: Optional[Path] = ConfigOption,
    seed: int = SeedOption,
    p_values: Optional[str] = typer.Option(None, "--P", help="Comma-separated P values"),
    l_values: Optional[str] = typer.Option(None, "--L", help="Comma-separated L values"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
) -> None:
    """
    Recherche sur grille (P, L)
    """
    rc = load_run_config(config, P_grid=p_values, L_grid=l_values)
    try:
        grid = rc.grid()
    except ConfigError as e:
        console.print(f"[red]{e}[/red]")
        raise typer.Exit(EXIT_USAGE) from e
    announce_seed(seed)
    context = {"P_values": grid["P"], "L_values": grid["L"], "out_dir": str(out) if out else None}
    run_stage("gridsearch", EvaluationStage, rc, seed, context)


@app.command("schedule-dump")
def schedule_dump(
    config: Optional[Path] = ConfigOption,
    kind: Optional[str] = typer.Option(None, "--kind", help="linear or cosine"),
    steps: Optional[int] = typer.Option(None, "--T", help="Number of timesteps"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="CSV file (stdout if omitted)"),
) -> None:
    """
    Exporter le planning de bruit en CSV (t,beta,alpha,alpha_bar,b)
    """
    rc = load_run_config(config, schedule_kind=kind, T=steps)
    try:
        schedule = rc.schedule()
    except ConfigError as e:
        console.print(f"[red]{e}[/red]")
        raise typer.Exit(EXIT_USAGE) from e
    fields = ["t", "beta", "alpha", "alpha_bar", "b"]
    rows = [
        dict(zip(fields, [str(t)] + [repr(value) for value in values]))
        for t, *values in schedule.rows()
    ]
    if out:
        write_csv(out, fields, rows)
        console.print(f"[green]✓ {schedule.T} rows written to {out}[/green]")
    else:
        print(",".join(fields))
        for row in rows:
            print(",".join(row[field] for field in fields))


@app.command()
def pipeline(
    config: Optional[Path] = ConfigOption,
    seed: int = SeedOption,
) -> None:
    """
    Pipeline complet: datagen → codec → entraînement → recherche sur grille
    """
    rc = load_run_config(config)
    grid = rc.grid()
    announce_seed(seed)

    def build(cfg: Config, run_config: RunConfig, state_manager) -> PipelineOrchestrator:
        orchestrator = PipelineOrchestrator(cfg, run_config, state_manager)
        orchestrator.register_stage("datagen", DatagenStage(cfg, run_config, state_manager))
        orchestrator.register_stage("autoencoder", AutoencoderStage(cfg, run_config, state_manager))
        orchestrator.register_stage("diffusion", DiffusionTrainingStage(cfg, run_config, state_manager))
        orchestrator.register_stage("evaluation", EvaluationStage(cfg, run_config, state_manager))
        return orchestrator

    context = {"evaluation": {"P_values": grid["P"], "L_values": grid["L"]}}
    run_stage("pipeline", PipelineOrchestrator, rc, seed, context, build=build)


@app.command()
def runs(limit: int = typer.Option(10, "--limit", help="Number of runs to show")) -> None:
    """
    Lister les derniers runs enregistrés
    """
    state_manager = make_state_manager(Config())
    recorded = state_manager.list_runs(limit)
    if not recorded:
        console.print("[yellow]No recorded runs[/yellow]")
        return
    for run in recorded:
        icon = "✓" if run.status == RunStatus.COMPLETED else "✗"
        console.print(f"  {icon} {run.run_id} seed={run.seed} {run.status.value} {run.created_at:%Y-%m-%d %H:%M:%S}")


@app.command()
def version() -> None:
    """
    Afficher la version
    """
    config = Config()
    console.print(Panel.fit(f"[bold]{config.app_name}[/bold] version [cyan]{config.app_version}[/cyan]"))


def cli(argv: Optional[List[str]] = None) -> int:
    """
    Point d'entrée programmable

    Returns:
        int: 0 succès, 1 erreur d'utilisation, 2 erreur d'exécution
    """
    command = typer.main.get_command(app)
    try:
        result = command.main(args=argv, prog_name="bernoulli-ad", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        return EXIT_USAGE
    except ConfigError as e:
        console.print(f"[red]Invalid configuration: {e}[/red]")
        return EXIT_USAGE
    except BernoulliADError as e:
        console.print(f"[red]{type(e).__name__}: {e}[/red]")
        return EXIT_RUNTIME
    return result if isinstance(result, int) else 0


def main() -> None:
    """Point d'entrée principal"""
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
