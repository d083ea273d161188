"""Command-line front end for selection, rewards, training, and analysis.

Exit codes: 0 success, 2 validation error, 3 I/O error, 4 numeric
divergence. Every command prints its resolved configuration on stderr and
is idempotent on read-only inputs. Set HEAL_LOG=debug|info|warning to get
progress logging on stderr.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import json
import logging
import os
import sys

import click

from .analysis import curve_table, pass_at_k_per_prompt
from .eda import batch_rewards
from .errors import DivergenceError, ValidationError
from .selection import DEFAULT_SELECT_K, score_groups, select_top_k
from .simulator.training import load_config, train
from .trace_io import (
    export_heatmap,
    load_traces,
    read_trace_records,
    trajectory_from_record,
)

log = logging.getLogger("heal")


def _setup_logging() -> None:
    wanted = os.environ.get("HEAL_LOG", "")
    if not wanted:
        return
    level = getattr(logging, wanted.upper(), None)
    if not isinstance(level, int):
        level = logging.INFO
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def _echo_config(**settings) -> None:
    for key, value in settings.items():
        click.echo(f"{key} = {value}", err=True)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except DivergenceError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(4)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)

    return wrapper


def _write_csv(path, header, rows) -> None:
    def emit(fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if cell is None else cell for cell in row])

    if path is None:
        emit(sys.stdout)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            emit(fh)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def main() -> None:
    """Entropy-dynamics toolkit: data selection, rewards, toy RL runs."""
    _setup_logging()


@main.command()
@click.option("--traces", "traces_path", required=True, type=click.Path(), help="input trace JSONL")
@click.option("--k", type=int, default=DEFAULT_SELECT_K, show_default=True, help="prompts to keep")
@click.option("--out", "out_path", required=True, type=click.Path(), help="output JSONL")
@_guarded
def select(traces_path: str, k: int, out_path: str) -> None:
    """Score prompts by uncertainty x diversity and keep the top K."""
    _echo_config(command="select", traces=traces_path, k=k, out=out_path)
    groups = load_traces(traces_path)
    scores = score_groups(groups)
    chosen = select_top_k(scores, k)
    with open(out_path, "w", encoding="utf-8") as fh:
        for s in scores:
            fh.write(
                json.dumps(
                    {
                        "prompt_id": s.prompt_id,
                        "accuracy": s.accuracy,
                        "uncertainty": s.uncertainty,
                        "diversity": s.diversity,
                        "composite": s.composite,
                    }
                )
                + "\n"
            )
        fh.write(json.dumps({"selected": chosen}) + "\n")
    log.info("scored %d prompts, kept %d", len(scores), len(chosen))


@main.command()
@click.option("--traces", "traces_path", required=True, type=click.Path(), help="input trace JSONL")
@click.option("--sim", "sim_name", type=click.Choice(["kl", "hti", "pl"]), default="kl",
              show_default=True, help="dynamics similarity")
@click.option("--out", "out_path", required=True, type=click.Path(), help="output JSONL")
@_guarded
def reward(traces_path: str, sim_name: str, out_path: str) -> None:
    """Emit accuracy plus alignment-bonus rewards for a trace batch."""
    _echo_config(command="reward", traces=traces_path, sim=sim_name, out=out_path)
    records = read_trace_records(traces_path)
    trajectories = [trajectory_from_record(r) for r in records]
    rewards = batch_rewards(trajectories, sim_name)
    with open(out_path, "w", encoding="utf-8") as fh:
        for r in rewards:
            obj = {
                "trajectory_id": r.trajectory_id,
                "prompt_id": r.prompt_id,
                "domain": r.domain,
                "r_acc": r.r_acc,
                "r_eda": r.r_eda,
                "total": r.total,
            }
            if r.s_intra is not None:
                obj["s_intra"] = r.s_intra
            if r.s_inter is not None:
                obj["s_inter"] = r.s_inter
            fh.write(json.dumps(obj) + "\n")
    log.info("rewarded %d trajectories", len(rewards))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="flat key = value config file")
@click.option("--out", "out_dir", required=True, type=click.Path(), help="run directory to create")
@click.option("--seed", type=int, default=None, help="override the config seed")
@_guarded
def sim(config_path: str, out_dir: str, seed: int | None) -> None:
    """Train the tabular policy and persist metrics/config/policy."""
    cfg = load_config(config_path)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
        cfg.validate()
    for name in [f.name for f in dataclasses.fields(cfg)]:
        click.echo(f"{name} = {getattr(cfg, name)}", err=True)
    record = train(cfg, out_dir)
    log.info("run %s: %d steps, %d metric rows", record.status,
             record.steps_completed, len(record.metrics))


@main.command()
@click.option("--traces", "traces_path", required=True, type=click.Path(), help="input trace JSONL")
@click.option("--k", "ks_text", default="1,5,10", show_default=True,
              help="comma-separated subset sizes")
@click.option("--out", "out_path", default=None, type=click.Path(), help="CSV path (default stdout)")
@_guarded
def passk(traces_path: str, ks_text: str, out_path) -> None:
    """Exact pass@k per prompt, plus the mean over prompts."""
    _echo_config(command="passk", traces=traces_path, k=ks_text, out=out_path)
    try:
        ks = [int(part) for part in ks_text.split(",") if part.strip()]
    except ValueError:
        raise ValidationError(f"--k must be comma-separated integers, got {ks_text!r}") from None
    records = read_trace_records(traces_path)
    trajectories = [trajectory_from_record(r) for r in records]
    rows = pass_at_k_per_prompt(trajectories, ks)
    header = ["prompt_id", "n", "c"] + [f"pass@{k}" for k in ks]
    table = [[pid, n, c] + values for pid, n, c, values in rows]
    means = [sum(r[3 + i] for r in table) / len(table) for i in range(len(ks))]
    table.append(["mean", None, None] + means)
    _write_csv(out_path, header, table)


@main.command()
@click.option("--run", "run_dirs", multiple=True, required=True, type=click.Path(),
              help="run directory (repeatable)")
@click.option("--label", "labels", multiple=True, help="label per run, same order")
@click.option("--out", "out_path", default=None, type=click.Path(), help="CSV path (default stdout)")
@_guarded
def curves(run_dirs, labels, out_path) -> None:
    """Emit entropy/reward curves from run metrics as plot-ready CSV."""
    _echo_config(command="curves", runs=",".join(run_dirs),
                 labels=",".join(labels) or None, out=out_path)
    header, rows = curve_table(list(run_dirs), list(labels) if labels else None)
    _write_csv(out_path, header, rows)


@main.command()
@click.option("--traces", "traces_path", required=True, type=click.Path(), help="input trace JSONL")
@click.option("--out", "out_path", required=True, type=click.Path(), help="output CSV")
@_guarded
def heatmap(traces_path: str, out_path: str) -> None:
    """Pairwise entropy-dynamics distance matrix as CSV."""
    _echo_config(command="heatmap", traces=traces_path, out=out_path)
    records = read_trace_records(traces_path)
    dynamics = [trajectory_from_record(r).dynamics for r in records]
    export_heatmap(dynamics, out_path)
    log.info("wrote %dx%d heatmap", len(dynamics), len(dynamics))


if __name__ == "__main__":
    main()
