"""Command-line interface: one subcommand per pipeline stage plus ``run``.

Exit codes: 0 success, 1 configuration/validation error, 2 stage failure.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .config import PipelineConfig
from .errors import ConfigError, CorpusError, StageError, SynthNotesError
from .generation import METHODS
from .pipeline import PipelineRun, emit_report, run_pipeline

EXIT_VALIDATION = 1
EXIT_STAGE = 2

def _load_config(config_path, **overrides) -> PipelineConfig:
    if config_path is None:
        raise ConfigError("--config is required")
    config = PipelineConfig.from_file(config_path)
    if overrides.get("seed") is not None:
        config.seed = overrides["seed"]
    if overrides.get("jobs") is not None:
        config.jobs = overrides["jobs"]
    if overrides.get("backend") is not None:
        config.backend = overrides["backend"]
    if overrides.get("audit_mode") is not None:
        config.audit_mode = overrides["audit_mode"]
    if overrides.get("out") is not None:
        config.out = Path(overrides["out"])
    if overrides.get("method") is not None:
        config.methods = [overrides["method"]]
    config.validate()
    return config


METHOD_CHOICES = list(METHODS) + ["normalized"]  # short alias


def _method_option(fn):
    return click.option(
        "--method",
        type=click.Choice(METHOD_CHOICES),
        required=True,
        callback=lambda ctx, param, v: "normalized_one_shot" if v == "normalized" else v,
    )(fn)


def _common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(), help="Run config YAML.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Override the run seed.")(fn)
    fn = click.option("--jobs", type=int, default=None, help="Intra-stage parallelism.")(fn)
    fn = click.option("--out", type=click.Path(), default=None, help="Override the run directory.")(fn)
    fn = click.option(
        "--backend", type=str, default=None, help="Backend name (built-in or configured)."
    )(fn)
    fn = click.option(
        "--audit-mode", type=click.Choice(["per_note", "global"]), default=None
    )(fn)
    return fn


def _run_stages(config: PipelineConfig, names: list[str]) -> None:
    config.out.mkdir(parents=True, exist_ok=True)
    run = PipelineRun(config)
    by_name = {stage.name: stage for stage in run.stages()}
    for name in names:
        stage = by_name.get(name)
        if stage is None:
            raise ConfigError(f"stage {name!r} is not active under the configured methods")
        missing = [str(p) for p in stage.inputs if not p.exists()]
        if missing:
            raise StageError(stage.name, f"missing input file(s): {', '.join(missing)}")
        stage.run()
        click.echo(f"stage {name}: done")


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable info logging.")
def cli(verbose):
    """Synthetic clinical note pipeline: repopulate, generate, audit, evaluate."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(message)s")


@cli.command()
@_common_options
def reid(config_path, **overrides):
    """Repopulate PHI tags with dummy surrogates and write the mapping."""
    config = _load_config(config_path, **overrides)
    _run_stages(config, ["reid"])


@cli.command()
@_common_options
def normalize(config_path, **overrides):
    """Strip re-identified notes down to alphabetic words."""
    config = _load_config(config_path, **overrides)
    _run_stages(config, ["normalize"])


@cli.command()
@_common_options
def keywords(config_path, **overrides):
    """Extract keyphrases and build cloze prompts."""
    config = _load_config(config_path, **overrides)
    if "keyword" not in config.methods:
        config.methods = config.methods + ["keyword"]
    _run_stages(config, ["keywords"])


@cli.command()
@_method_option
@_common_options
def generate(method, config_path, **overrides):
    """Drive the generation backend for one prompt style."""
    config = _load_config(config_path, method=method, **overrides)
    _run_stages(config, [f"generate_{method}"])


@cli.command()
@_method_option
@_common_options
def audit(method, config_path, **overrides):
    """Scan a synthetic corpus for surrogate leakage."""
    config = _load_config(config_path, method=method, **overrides)
    _run_stages(config, [f"audit_{method}"])


@cli.command()
@_method_option
@_common_options
def metrics(method, config_path, **overrides):
    """Compute per-pair text-overlap F1 and cosine similarity."""
    config = _load_config(config_path, method=method, **overrides)
    _run_stages(config, [f"metrics_{method}"])


@cli.command()
@_method_option
@_common_options
def utility(method, config_path, **overrides):
    """Cross-validated coding utility: synthetic train, source test."""
    config = _load_config(config_path, method=method, **overrides)
    _run_stages(config, ["utility_benchmark", f"utility_{method}"])


@cli.command()
@click.option("--format", "format_", type=click.Choice(["csv", "json"]), default="csv")
@_common_options
def report(format_, config_path, **overrides):
    """Flatten stage outputs into chart-ready tables."""
    config = _load_config(config_path, **overrides)
    written = emit_report(config.out, format_)
    for path in written:
        click.echo(str(path))


@cli.command()
@_common_options
def run(config_path, **overrides):
    """Run the full pipeline with resume."""
    config = _load_config(config_path, **overrides)
    out = run_pipeline(config)
    click.echo(f"run complete: {out}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except (ConfigError, CorpusError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_VALIDATION
    except StageError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_STAGE
    except SynthNotesError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_STAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_VALIDATION
    except click.exceptions.Abort:
        return EXIT_VALIDATION
    return 0


if __name__ == "__main__":
    sys.exit(main())
