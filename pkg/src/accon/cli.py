"""``accon`` command line.  Exit codes: 0 ok, 1 check failed, 2 bad input, 3 numeric failure."""

import sys

import click

from . import pipeline
from .config import ConfigError, load_config
from .errors import CheckFailure, ContractError, InfeasibleSplitError, InputError, NonFiniteLossError

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


def _common(fn):
    fn = click.option("--scale", type=click.Choice(["desk", "paper"]), default=None,
                      help="Profile of defaults under the config file.")(fn)
    fn = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Root seed override.")(fn)
    fn = click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
                      help="Output directory (default: config out_dir, else ./accon-out).")(fn)
    fn = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                      help="JSON run config.")(fn)
    return fn


def _execute(stage, config_path, out_dir, seed, scale):
    try:
        cfg = load_config(config_path, scale, seed)
        out = out_dir or cfg.out_dir or "accon-out"
        return stage(cfg, out)
    except CheckFailure as exc:
        click.echo(f"check failed: {exc}", err=True)
        sys.exit(EXIT_CHECK)
    except (ConfigError, InputError, InfeasibleSplitError, ContractError, FileNotFoundError) as exc:
        click.echo(f"input error: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    except (NonFiniteLossError, FloatingPointError) as exc:
        click.echo(f"numeric failure: {exc}", err=True)
        sys.exit(EXIT_NUMERIC)


@click.group()
def main():
    """Angle-compensated contrastive regression: data, training and checks."""


@main.command("gen-data")
@_common
def gen_data(config_path, out_dir, seed, scale):
    """Generate train/val/test CSVs and a manifest."""
    def stage(cfg, out):
        m = pipeline.gen_data(cfg, out)
        c = m["counts"]
        click.echo(f"wrote {out}/data: train {c['train']}, val {c['val']}, test {c['test']}")
    _execute(stage, config_path, out_dir, seed, scale)


@main.command()
@_common
def train(config_path, out_dir, seed, scale):
    """Train on generated data (or free embeddings) and write a summary."""
    def stage(cfg, out):
        s = pipeline.train(cfg, out)
        if s["mode"] == "free_embedding":
            click.echo(f"alignment error {s['alignment_first']:.4f} -> {s['alignment_final']:.4f}, "
                       f"geometry pearson {s['geometry']['pearson']:.4f}")
            return
        click.echo(f"test mae {s['test']['mae']:.4f}, geometry pearson {s['geometry']['pearson']:.4f}")
        if "deltas" in s:
            d = s["deltas"]
            click.echo(f"vs vanilla: mae {d['mae']:+.4f}, pearson {d['geometry_pearson']:+.4f}")
    _execute(stage, config_path, out_dir, seed, scale)


@main.command("eval")
@_common
def eval_(config_path, out_dir, seed, scale):
    """Evaluate the best checkpoint on the test split."""
    def stage(cfg, out):
        m = pipeline.eval_run(cfg, out)
        click.echo(f"test mae {m['test']['mae']:.4f}, r2 {m['test']['r2']:.4f}")
    _execute(stage, config_path, out_dir, seed, scale)


@main.command()
@_common
def gradcheck(config_path, out_dir, seed, scale):
    """Finite-difference check of the combined loss gradient."""
    def stage(cfg, out):
        r = pipeline.gradcheck_run(cfg, out)
        click.echo(f"gradcheck: {r['n_configs']} configs, max relative error {r['max_rel_error']:.3e} "
                   f"(tol {r['tol']:g})")
    _execute(stage, config_path, out_dir, seed, scale)


@main.command()
@_common
def boundcheck(config_path, out_dir, seed, scale):
    """Survey the loss lower bounds over random batches."""
    def stage(cfg, out):
        r = pipeline.boundcheck_run(cfg, out)
        click.echo(f"boundcheck: {r['n_batches']} batches, intermediate inequality holds, "
                   f"min margin {r['min_margin']:.3e}")
        click.echo(f"stated bound holds on {r['stated_pass_fraction']:.3f}, "
                   f"derived on {r['derived_pass_fraction']:.3f}")
    _execute(stage, config_path, out_dir, seed, scale)


@main.command()
@_common
def sweep(config_path, out_dir, seed, scale):
    """Grid over gamma and projection width, one row per cell."""
    def stage(cfg, out):
        rows, s = pipeline.sweep(cfg, out)
        click.echo(f"sweep: {s['n_cells']} cells, {s['n_failed']} failed -> {out}/sweep.csv")
    _execute(stage, config_path, out_dir, seed, scale)


if __name__ == "__main__":
    main()
