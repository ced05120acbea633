"""MFGAN CLI - Command Line Interface."""

import functools
import logging
import sys
from typing import Optional

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.table import Table

from . import __version__
from .errors import CheckpointError, ConfigError, DataError, MfganError

console = Console()

# 2 stays with click usage errors.
EXIT_RUNTIME = 1
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_CHECKPOINT = 5


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, DataError):
        return EXIT_DATA
    if isinstance(error, CheckpointError):
        return EXIT_CHECKPOINT
    return EXIT_RUNTIME


def handle_errors(func):
    """Print failures in red and exit with the matching code."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except MfganError as e:
            console.print(f"[red]{type(e).__name__}: {escape(str(e))}[/red]")
            sys.exit(exit_code_for(e))
        except Exception as e:
            logging.getLogger(__name__).debug("Unhandled failure", exc_info=True)
            console.print(f"[red]Error: {escape(str(e))}[/red]")
            sys.exit(EXIT_RUNTIME)

    return wrapper


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _load(config_path: Optional[str], seed: Optional[int], out: Optional[str], checkpoint: Optional[str]):
    from .config import load_config

    return load_config(config_path, overrides={"seed": seed, "out": out, "checkpoint": checkpoint})


def common_options(func):
    func = click.option("--checkpoint", default=None, help="Checkpoint file (default <out>/checkpoints/latest.ckpt)")(func)
    func = click.option("--out", "-o", default=None, help="Output directory")(func)
    func = click.option("--seed", default=None, type=int, help="Override the random seed")(func)
    func = click.option("--config", "-c", "config_path", default=None, type=click.Path(),
                        help="key=value config file")(func)
    return func


@click.group()
@click.version_option(version=__version__, prog_name="mfgan")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
def cli(verbose: bool):
    """MFGAN - adversarial sequential recommendation with factor discriminators."""
    _setup_logging(verbose)


# ========== PREP ==========

@cli.command()
@common_options
@handle_errors
def prep(config_path, seed, out, checkpoint):
    """Filter, split and bin a dataset into a split manifest.

    Examples:

        mfgan prep --config ml1m.conf

        mfgan prep -c ml1m.conf --out runs/ml1m
    """
    from .commands import run_prep

    config = _load(config_path, seed, out, checkpoint)
    with console.status("[bold green]Preparing dataset..."):
        result = run_prep(config)

    table = Table(title="Dataset Statistics")
    table.add_column("Statistic", style="cyan")
    table.add_column("Value", justify="right", style="green")
    for key in ("users", "items", "interactions", "factors", "avg_length", "density", "dropped_users"):
        table.add_row(key.replace("_", " ").title(), str(result.stats[key]))
    console.print(table)
    console.print(f"[green]Manifest written to {result.manifest_dir}[/green]")


# ========== TRAIN ==========

@cli.command()
@common_options
@click.option("--resume", is_flag=True, help="Continue from the checkpoint if it exists")
@click.option("--rounds", default=None, type=int, help="Stop after this many adversarial rounds in total")
@handle_errors
def train(config_path, seed, out, checkpoint, resume, rounds):
    """Pretrain the generator and discriminators, then train adversarially.

    Examples:

        mfgan train -c ml1m.conf

        mfgan train -c ml1m.conf --resume --rounds 5
    """
    from .commands import run_train

    config = _load(config_path, seed, out, checkpoint)
    with console.status("[bold green]Training...") as status:
        def progress(state):
            status.update(f"[bold green]Training: {state.stage}, epoch {state.epoch}, round {state.round}")

        result = run_train(config, resume=resume, rounds=rounds, on_progress=progress)

    s = result.state
    table = Table(title="Training Summary")
    table.add_column("Setting", style="cyan")
    table.add_column("Value", style="green")
    table.add_row("Stage", s.stage)
    table.add_row("Epochs", str(s.epoch))
    table.add_row("Adversarial rounds", str(s.round))
    table.add_row("Best valid NDCG", f"{s.best_ndcg:.4f}" if s.best_ndcg >= 0 else "-")
    table.add_row("Discriminators", ", ".join(d.name for d in s.discriminators))
    table.add_row("Checkpoint", str(result.checkpoint))
    table.add_row("Ledger", str(result.ledger))
    console.print(table)


# ========== EVALUATE ==========

@cli.command()
@common_options
@click.option("--target", default="test", type=click.Choice(["test", "valid"]), help="Held-out item to rank")
@handle_errors
def evaluate(config_path, seed, out, checkpoint, target):
    """Rank held-out items for the checkpointed generator and PopRec."""
    from .commands import run_evaluate
    from .evaluation import render_table

    config = _load(config_path, seed, out, checkpoint)
    with console.status("[bold green]Evaluating..."):
        result = run_evaluate(config, target=target)
    console.print(render_table(result.reports, title=f"Evaluation ({target})"))
    for path in result.files:
        console.print(f"[dim]{path}[/dim]")


# ========== ATTRIBUTE ==========

@cli.command()
@common_options
@click.option("--user", "users", multiple=True, help="User to attribute (repeatable)")
@click.option("--limit", default=5, type=int, help="Number of users when --user is not given (0 = all)")
@handle_errors
def attribute(config_path, seed, out, checkpoint, users, limit):
    """Export per-position discriminator scores and the dominant factor."""
    from .commands import run_attribute

    config = _load(config_path, seed, out, checkpoint)
    with console.status("[bold green]Scoring sequences..."):
        result = run_attribute(config, users=users, limit=limit)

    table = Table(title="Attribution")
    table.add_column("User", style="cyan")
    table.add_column("Pos", justify="right")
    table.add_column("Item")
    for name in result.table.factors:
        table.add_column(name, justify="right", style="green")
    table.add_column("Dominant", style="bold")
    for row in result.table.rows[:40]:
        table.add_row(row.user, str(row.position), row.item, *[f"{s:.3f}" for s in row.scores], row.dominant)
    console.print(table)
    if len(result.table.rows) > 40:
        console.print(f"[dim]... {len(result.table.rows) - 40} more rows[/dim]")
    console.print(f"[green]Wrote {result.tsv} and {result.json}[/green]")


# ========== SYNTH ==========

@cli.command()
@click.option("--out", "-o", default="data/synthetic", help="Output directory")
@click.option("--items", default=100, type=int, help="Catalog size")
@click.option("--users", default=500, type=int, help="Number of users")
@click.option("--categories", default=5, type=int, help="Hidden categories")
@click.option("--seed", default=0, type=int, help="Random seed")
@handle_errors
def synth(out, items, users, categories, seed):
    """Write a synthetic interactions/factors dataset."""
    from .synthetic import FACTOR_SPECS, SyntheticConfig, write_synthetic

    config = SyntheticConfig(num_items=items, num_users=users, num_categories=categories, seed=seed)
    interactions, factors = write_synthetic(out, config)
    console.print(f"[green]Wrote {interactions}[/green]")
    console.print(f"[green]Wrote {factors}[/green]")
    console.print(f"[dim]factor_specs={FACTOR_SPECS}[/dim]")


# ========== BENCHMARK ==========

@cli.command()
@click.option("--out", "-o", default="runs/benchmark", help="Output directory")
@click.option("--seeds", default="0,1,2,3,4", help="Comma-separated training seeds")
@click.option("--config", "-c", "config_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="key=value config whose training keys replace the desk-scale defaults")
@click.option("--ablation", is_flag=True,
              help="Compare discriminator sets, layouts and reward regimes instead")
@handle_errors
def benchmark(out, seeds, config_path, ablation):
    """Compare PopRec, MLE, MFGAN and SDSF on synthetic data over several seeds.

    Examples:

        mfgan benchmark --seeds 0,1,2

        mfgan benchmark --ablation -o runs/ablation
    """
    from .benchmark import desk_training_config, run_ablation, run_benchmark
    from .config import apply_values, RunConfig
    from dotenv import dotenv_values

    try:
        seed_list = [int(s) for s in seeds.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seeds must be comma-separated integers, got {seeds!r}") from None
    training = desk_training_config()
    if config_path:
        training = apply_values(RunConfig(training=training), dict(dotenv_values(config_path))).training
        training.validate()

    if ablation:
        with console.status("[bold green]Running ablation...") as status:
            result = run_ablation(out, seed_list, training=training,
                                  on_seed=lambda seed: status.update(f"[bold green]Seed {seed} done..."))
        table = Table(title=f"Ablation (NDCG@{result.cutoff})")
        table.add_column("Setting", style="cyan")
        for seed in result.seeds:
            table.add_column(f"Seed {seed}", justify="right", style="green")
        table.add_column("Median", justify="right", style="bold")
        for label, values in result.scores.items():
            table.add_row(escape(label), *[f"{v:.4f}" for v in values], f"{result.median(label):.4f}")
        console.print(table)
        return

    with console.status("[bold green]Running benchmark...") as status:
        report = run_benchmark(out, seed_list, training=training,
                               on_seed=lambda r: status.update(f"[bold green]Seed {r.seed} done..."))

    k = report.cutoff
    table = Table(title=f"Benchmark (NDCG@{k})")
    table.add_column("Seed", justify="right", style="cyan")
    for name in ("PopRec", "MLE", "MFGAN", "SDSF", "Std MFGAN", "Std SDSF"):
        table.add_column(name, justify="right", style="green")
    for r in report.rows:
        table.add_row(str(r.seed), *[f"{v:.4f}" for v in (r.poprec, r.mle, r.mfgan, r.sdsf, r.std_mfgan, r.std_sdsf)])
    table.add_row("median", *[f"{report.median(c):.4f}" for c in
                              ("poprec", "mle", "mfgan", "sdsf", "std_mfgan", "std_sdsf")], style="bold")
    console.print(table)
    console.print(f"MLE beats PopRec: {report.mle_beats_poprec}")
    console.print(f"MFGAN >= MLE: {report.mfgan_at_least_mle}")
    console.print(f"Multi-factor objective steadier than SDSF: {report.multi_factor_steadier}")


def main():
    """Entry point for the CLI."""
    cli()


if __name__ == "__main__":
    main()
