"""Trainer command line.

`trainlab train` fits a generator/critic pair on clean images from a
dataset directory (rawf32 or grayscale PNG), synthesizing low-quality
inputs on the fly, and writes losses.csv, checkpoint.pt, and
generator.dwb into the output directory. `trainlab export` turns a
checkpoint into a weight bundle without retraining. `trainlab
demo-data` emits a small deterministic clean-image corpus so the whole
pipeline can run without any external dataset.
"""

from __future__ import annotations

import os

import click

from .data import load_gray, make_training_image, write_rawf32, PairSampler
from .hyper import PROFILES, TASKS, TrainHyper
from .train import EXTRACTOR_SOURCES, build_state, fit, restore_generator

DATA_EXTENSIONS = (".rawf32", ".png")


def _load_dataset(directory: str) -> list:
    paths = sorted(
        os.path.join(directory, name)
        for name in os.listdir(directory)
        if name.lower().endswith(DATA_EXTENSIONS)
    )
    if not paths:
        raise click.ClickException(
            f"no {' or '.join(DATA_EXTENSIONS)} images found in {directory}"
        )
    return [load_gray(p) for p in paths]


def _parse_counts(text: str, depth: int):
    try:
        counts = tuple(int(c) for c in text.split(","))
    except ValueError as exc:
        raise click.ClickException(f"bad res-counts {text!r}: {exc}") from exc
    if len(counts) != depth:
        raise click.ClickException(
            f"res-counts has {len(counts)} entries but depth is {depth}"
        )
    return counts


@click.group()
def main() -> None:
    """Adversarial trainer for the restoration generator."""


@main.command()
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False),
              required=True, help="Directory of clean images (.rawf32 or .png).")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--task", type=click.Choice(list(TASKS)), default="denoise")
@click.option("--profile", type=click.Choice(list(PROFILES)), default="abdominal")
@click.option("--epochs", type=int, default=None, help="Override the profile epoch count.")
@click.option("--steps-per-epoch", type=int, default=50)
@click.option("--patch", type=int, default=64)
@click.option("--seed", type=int, default=0)
@click.option("--batch-size", type=int, default=None)
@click.option("--learning-rate", type=float, default=None)
@click.option("--adv-weight", type=float, default=None)
@click.option("--penalty-coef", type=float, default=None)
@click.option("--n-critic", type=int, default=None)
@click.option("--extractor", type=click.Choice(list(EXTRACTOR_SOURCES)), default="auto")
@click.option("--depth", type=int, default=4)
@click.option("--res-counts", default="4,4,6,2")
@click.option("--base-width", type=int, default=64)
def train(data_dir, out_dir, task, profile, epochs, steps_per_epoch, patch, seed,
          batch_size, learning_rate, adv_weight, penalty_coef, n_critic, extractor,
          depth, res_counts, base_width):
    """Train on a clean-image directory and export a weight bundle."""
    overrides = {
        key: value
        for key, value in (
            ("batch_size", batch_size),
            ("learning_rate", learning_rate),
            ("adv_weight", adv_weight),
            ("penalty_coef", penalty_coef),
            ("n_critic", n_critic),
            ("epochs", epochs),
        )
        if value is not None
    }
    try:
        hyper = TrainHyper.for_profile(task, profile, **overrides)
        counts = _parse_counts(res_counts, depth)
        images = _load_dataset(data_dir)
        sampler = PairSampler(images, task=task, patch=patch,
                              batch_size=hyper.batch_size, base_seed=seed)
        models = build_state(hyper, image_size=patch, extractor=extractor,
                             depth=depth, res_counts=counts,
                             base_width=base_width, seed=seed)
        means = fit(models, sampler, hyper, out_dir,
                    steps_per_epoch=steps_per_epoch, log=click.echo)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(
        f"trained {hyper.epochs} epochs ({hyper.epochs * steps_per_epoch} steps); "
        f"final mse {means[-1].mse:.6g}; wrote losses.csv, checkpoint.pt, "
        f"generator.dwb in {out_dir}"
    )


@main.command()
@click.option("--checkpoint", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def export(checkpoint, out_path):
    """Export the generator stored in a checkpoint as a weight bundle."""
    from .bundle import export_bundle

    try:
        generator, payload = restore_generator(checkpoint)
        generator.eval()
        export_bundle(generator, out_path)
    except (ValueError, KeyError, OSError) as exc:
        raise click.ClickException(f"export: {exc}") from exc
    click.echo(f"wrote {out_path} (epoch {payload['epoch']})")


@main.command("demo-data")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--count", type=int, default=8)
@click.option("--size", type=int, default=96)
@click.option("--seed", type=int, default=1)
def demo_data(out_dir, count, size, seed):
    """Write a deterministic synthetic clean-image corpus."""
    if count < 1:
        raise click.ClickException(f"count must be >= 1, got {count}")
    os.makedirs(out_dir, exist_ok=True)
    try:
        for i in range(count):
            img = make_training_image(size, seed + i)
            write_rawf32(os.path.join(out_dir, f"clean_{i:03d}.rawf32"), img)
    except ValueError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"wrote {count} images of {size}x{size} in {out_dir}")
