#!/usr/bin/env python3
# src/main/cli.py
"""
Command line runner for the master-equation lab.

    python -m src.main.cli run CONFIG [--seed N] [--kind K] [--out DIR]
                                      [--override key=value ...] [--log-level L] [--json-logs]

Precedence: defaults < config file < --override < --seed/--kind/--out.
Exit status: 0 all verdicts pass, 1 failed verdict or aborted run, 2 bad config.
"""
from __future__ import annotations

import logging
import sys
from typing import Optional, Tuple

import click

from src.main.config import KINDS, ConfigError, load_config
from src.main.experiments import run_experiment
from src.utils.logging_setup import configure_logging

logger = logging.getLogger(__name__)

EXIT_CONFIG_ERROR = 2


@click.group()
def cli() -> None:
    """Particle lab for master equations with common noise."""


@cli.command("run")
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=None, help="Seed of every random draw of the run.")
@click.option("--kind", type=click.Choice(KINDS), default=None, help="Experiment pipeline to run.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("--override", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Dotted config key with a YAML value, e.g. sim.dt=0.02 (repeatable).")
@click.option("--log-level", default="WARNING", show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
@click.option("--json-logs", is_flag=True, help="Emit logs as JSON lines on stderr.")
def run_command(
    config: str,
    seed: Optional[int],
    kind: Optional[str],
    out_dir: Optional[str],
    overrides: Tuple[str, ...],
    log_level: str,
    json_logs: bool,
) -> None:
    """Run the experiment described by CONFIG (JSON, or YAML by extension)."""
    configure_logging(log_level, json_output=json_logs)
    try:
        cfg = load_config(config, overrides=overrides, seed=seed, kind=kind, output_dir=out_dir)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)

    status = run_experiment(cfg)
    click.echo(f"{cfg.kind} on {cfg.model_name}: {'pass' if status == 0 else 'fail'} -> {cfg.output_dir}")
    sys.exit(status)


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
