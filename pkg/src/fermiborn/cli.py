"""Command-line interface: dataset generation, training, evaluation, export,
and oracle cross-checks.

Exit codes are a stable contract: 0 on success, 2 for usage or configuration
problems, 3 for numerical failures at runtime. Training runs are described by
a strict JSON config (unknown keys are rejected, see the README for the
schema) and leave a model checkpoint plus a history CSV in the configured
output directory.
"""

from __future__ import annotations

import json
import os
import re
from pathlib import Path

import click
import numpy as np

from . import baselines, compiler, oracle, trainer
from .datagen import (
    game_of_life_dataset,
    grid_mn_generate,
    load_dataset,
    mn_sample,
    save_dataset,
)
from .engine import FbmModel, all_zstrings
from .errors import (
    DatasetFormatError,
    FermibornError,
    InvalidInputError,
    LocalityLimitError,
    TrainingAbortError,
)
from .loss import KernelSpec, median_heuristic
from .persist import load_model, read_history, save_model, write_history

ORACLE_CHECK_MAX_D = 12
ORACLE_CHECK_TOL = 1e-8
MEDIAN_SUBSAMPLE = 500

_USAGE_ERRORS = (InvalidInputError, DatasetFormatError, LocalityLimitError)


def _fail(exc: Exception, code: int) -> "SystemExit":
    click.echo(f"error: {exc}", err=True)
    return SystemExit(code)


@click.group()
def main():
    """Fermionic Born machine toolkit."""


def _parse_dims(text: str) -> tuple[int, int]:
    match = re.fullmatch(r"(\d+)x(\d+)", text)
    if not match:
        raise click.UsageError(
            f"--dims must look like ROWSxCOLS (e.g. 3x4), got {text!r}"
        )
    return int(match.group(1)), int(match.group(2))


@main.command()
@click.option("--kind", type=click.Choice(["grid-mn", "game-of-life"]), required=True)
@click.option("--dims", default="3x4", show_default=True, help="grid shape ROWSxCOLS")
@click.option("--count", default=1000, show_default=True, help="number of samples")
@click.option("--steps", default=200, show_default=True,
              help="evolution steps (game-of-life only)")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(), help="dataset file to write")
def generate(kind, dims, count, steps, seed, out):
    """Generate a synthetic training dataset."""
    rows, cols = _parse_dims(dims)
    try:
        if kind == "grid-mn":
            mn = grid_mn_generate(rows, cols, seed=seed)
            data = mn_sample(mn, count, seed=seed + 1)
        else:
            data = game_of_life_dataset(rows, cols, steps=steps, count=count, seed=seed)
        save_dataset(data, out)
    except _USAGE_ERRORS as exc:
        raise _fail(exc, 2) from exc
    except FermibornError as exc:
        raise _fail(exc, 3) from exc
    click.echo(f"wrote {len(data)} samples of {data.n} bits to {out}")


_TOP_KEYS = {"model", "training", "data", "output"}
_MODEL_KEYS = {"N", "layers", "seed", "k", "m"}
_TRAIN_KEYS = {"epochs", "learning_rate", "kernels", "resample_strings"}
_KERNEL_KEYS = {"kind", "sigma", "ell_max", "n_ops"}
_DATA_KEYS = {"train", "test", "test_fraction"}
_OUTPUT_KEYS = {"directory", "checkpoint_every"}


def _check_keys(section: dict, allowed: set, required: set, where: str) -> None:
    if not isinstance(section, dict):
        raise InvalidInputError(f"config section {where!r} must be an object")
    unknown = set(section) - allowed
    if unknown:
        raise InvalidInputError(f"unknown keys in {where!r}: {sorted(unknown)}")
    missing = required - set(section)
    if missing:
        raise InvalidInputError(f"missing keys in {where!r}: {sorted(missing)}")


def _load_config(path) -> dict:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"config {path} is not valid JSON: {exc}") from exc
    _check_keys(doc, _TOP_KEYS, _TOP_KEYS, "top level")
    _check_keys(doc["model"], _MODEL_KEYS, {"N", "layers", "seed"}, "model")
    _check_keys(doc["training"], _TRAIN_KEYS,
                {"epochs", "learning_rate", "kernels"}, "training")
    _check_keys(doc["data"], _DATA_KEYS, {"train"}, "data")
    _check_keys(doc["output"], _OUTPUT_KEYS, {"directory"}, "output")
    kernels = doc["training"]["kernels"]
    if not isinstance(kernels, list) or not kernels:
        raise InvalidInputError("training.kernels must be a non-empty list")
    for i, entry in enumerate(kernels):
        _check_keys(entry, _KERNEL_KEYS, {"kind"}, f"training.kernels[{i}]")
    if "test" in doc["data"] and doc["data"].get("test_fraction"):
        raise InvalidInputError(
            "config data section: give either a test path or a test_fraction, not both"
        )
    return doc


def _resolve_kernels(entries: list[dict], data, seed: int) -> tuple[KernelSpec, ...]:
    """Turn config kernel entries into specs, expanding sigma="median"."""
    specs: list[KernelSpec] = []
    for entry in entries:
        kind = entry["kind"]
        sigma = entry.get("sigma")
        extra = {k: entry[k] for k in ("ell_max", "n_ops") if k in entry}
        if sigma == "median":
            if kind != "gaussian":
                raise InvalidInputError('sigma="median" requires a gaussian kernel')
            pair = median_heuristic(data, MEDIAN_SUBSAMPLE,
                                    np.random.default_rng((seed, 3)))
            click.echo(f"resolved median bandwidths: ({pair[0]:.6g}, {pair[1]:.6g})")
            specs.extend(KernelSpec(kind, sigma=s, **extra) for s in pair)
        else:
            specs.append(KernelSpec(kind, sigma=sigma, **extra))
    return tuple(specs)


def _split_rows(data, fraction: float):
    from .datagen import BitDataset

    if not (0.0 <= fraction < 1.0):
        raise InvalidInputError(
            f"test_fraction must lie in [0, 1), got {fraction}"
        )
    n_test = int(round(fraction * len(data)))
    if n_test == 0:
        return data, None
    if n_test >= len(data):
        raise InvalidInputError("test_fraction leaves no training rows")
    split = len(data) - n_test
    return (BitDataset(data.n, data.rows[:split]),
            BitDataset(data.n, data.rows[split:]))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--resume", is_flag=True,
              help="continue from the checkpoint in the output directory")
@click.option("--workers", type=int, default=None,
              help="accepted for interface uniformity; training uses the "
                   "vectorized evaluator and is single-threaded")
def train(config_path, resume, workers):
    """Train a model as described by a JSON config file."""
    try:
        cfg = _load_config(config_path)
        data = load_dataset(cfg["data"]["train"])
        train_data, test_data = _split_rows(
            data, float(cfg["data"].get("test_fraction", 0.0)))
        if "test" in cfg["data"]:
            test_data = load_dataset(cfg["data"]["test"])

        mc = cfg["model"]
        seed = mc["seed"]
        out_dir = Path(cfg["output"]["directory"])
        model_path = out_dir / "model.json"
        history_path = out_dir / "history.csv"

        start_epoch = 0
        prior_rows: list = []
        if resume:
            model, saved_seed, start_epoch = load_model(model_path)
            if saved_seed != seed:
                raise InvalidInputError(
                    f"checkpoint seed {saved_seed} differs from config seed {seed}"
                )
            if (model.N, model.k, model.m, model.ansatz.layers) != (
                    mc["N"], mc.get("k", 3), mc.get("m", 1), mc["layers"]):
                raise InvalidInputError(
                    "checkpoint model shape does not match the config model section"
                )
            if history_path.exists():
                prior_rows = read_history(history_path)
        else:
            model = FbmModel.random(
                mc["N"], mc["layers"], np.random.default_rng((seed, 0)),
                k=mc.get("k", 3), m=mc.get("m", 1))
        if train_data.n != model.n:
            raise InvalidInputError(
                f"dataset has {train_data.n} variables but the model measures {model.n}"
            )

        specs = _resolve_kernels(cfg["training"]["kernels"], train_data, seed)
        tc = trainer.TrainConfig(
            epochs=cfg["training"]["epochs"],
            learning_rate=cfg["training"]["learning_rate"],
            kernels=specs,
            seed=seed,
            resample_strings=bool(cfg["training"].get("resample_strings", True)),
            checkpoint_every=int(cfg["output"].get("checkpoint_every", 0)),
        )
    except _USAGE_ERRORS as exc:
        raise _fail(exc, 2) from exc

    os.makedirs(out_dir, exist_ok=True)
    try:
        model, history = trainer.train(
            model, train_data, tc,
            checkpoint_path=model_path, start_epoch=start_epoch)
    except TrainingAbortError as exc:
        if exc.history is not None:
            write_history(history_path, prior_rows + exc.history.as_rows())
        raise _fail(exc, 3) from exc
    except FermibornError as exc:
        raise _fail(exc, 3) from exc

    write_history(history_path, prior_rows + history.as_rows())
    click.echo(f"final loss: {history.losses[-1]:.10g}")
    if test_data is not None:
        groups = [trainer.strings_for_spec(sp, model.n,
                                           np.random.default_rng((seed, 2, 0)))
                  for sp in specs]
        test_loss = trainer.evaluate_loss(model, test_data, groups, specs)
        click.echo(f"test loss: {test_loss:.10g}")
    click.echo(f"wrote {model_path} and {history_path}")


@main.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--sigmas", default=None,
              help="comma-separated bandwidth sweep; default: the median pair")
@click.option("--ell-max", default=2, show_default=True)
@click.option("--n-ops", default=None, type=int,
              help="strings sampled per kernel; omit to enumerate exactly")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", default=None, type=click.Path(),
              help="directory for covariance CSVs (skipped if omitted)")
@click.option("--workers", type=int, default=None)
def eval_cmd(model_path, data_path, sigmas, ell_max, n_ops, seed, out_dir, workers):
    """Score a trained model against a dataset."""
    try:
        model, _, _ = load_model(model_path)
        data = load_dataset(data_path)
        if data.n != model.n:
            raise InvalidInputError(
                f"dataset has {data.n} variables but the model measures {model.n}"
            )
        if sigmas is None:
            sweep = list(median_heuristic(data, MEDIAN_SUBSAMPLE,
                                          np.random.default_rng((seed, 3))))
        else:
            try:
                sweep = [float(s) for s in sigmas.split(",") if s.strip()]
            except ValueError as exc:
                raise InvalidInputError(f"bad --sigmas value {sigmas!r}") from exc
            if not sweep:
                raise InvalidInputError("--sigmas must name at least one bandwidth")

        click.echo("sigma,mmd2")
        for i, sigma in enumerate(sweep):
            spec = KernelSpec("gaussian", sigma=sigma, ell_max=ell_max, n_ops=n_ops)
            strings = trainer.strings_for_spec(
                spec, model.n, np.random.default_rng((seed, 2, 0)))
            value = trainer.evaluate_loss(model, data, [strings], (spec,))
            click.echo(f"{sigma:.10g},{value:.17g}")

        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            model_cov = baselines.model_covariance(model, workers=workers)
            data_cov = baselines.empirical_covariance(data)
            for name, mat in (("covariance_model.csv", model_cov),
                              ("covariance_data.csv", data_cov)):
                np.savetxt(Path(out_dir) / name, mat, fmt="%.17g", delimiter=",")
            click.echo(f"wrote covariance matrices to {out_dir}")
    except _USAGE_ERRORS as exc:
        raise _fail(exc, 2) from exc
    except FermibornError as exc:
        raise _fail(exc, 3) from exc


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--format", "fmt", type=click.Choice(["native", "openqasm2"]),
              default="native", show_default=True)
@click.option("--out", default=None, type=click.Path(),
              help="output file; stdout if omitted")
def export(model_path, fmt, out):
    """Emit the model's measurement circuit as text."""
    try:
        model, _, _ = load_model(model_path)
        text = compiler.export(model, fmt)
    except _USAGE_ERRORS as exc:
        raise _fail(exc, 2) from exc
    except FermibornError as exc:
        raise _fail(exc, 3) from exc
    if out is None:
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(f"wrote {fmt} circuit to {out}")


@main.command("oracle-check")
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--ell-max", default=4, show_default=True)
@click.option("--workers", type=int, default=None)
def oracle_check(model_path, ell_max, workers):
    """Compare the engine against a dense statevector simulation."""
    try:
        model, _, _ = load_model(model_path)
        if model.d > ORACLE_CHECK_MAX_D:
            raise InvalidInputError(
                f"oracle check is limited to d <= {ORACLE_CHECK_MAX_D} modes "
                f"(dense simulation); this model has d = {model.d}"
            )
        strings = all_zstrings(model.n, min(ell_max, model.n))
        from .engine import zstring_batch

        engine_vals = np.asarray(zstring_batch(model, strings, ell_max=ell_max,
                                               workers=workers))
        dist = oracle.exact_distribution(model)
        oracle_vals = np.array([oracle.distribution_zstring(dist, z)
                                for z in strings])
    except _USAGE_ERRORS as exc:
        raise _fail(exc, 2) from exc
    except FermibornError as exc:
        raise _fail(exc, 3) from exc
    dev = float(np.max(np.abs(engine_vals - oracle_vals)))
    click.echo(f"checked {len(strings)} strings, max deviation {dev:.3e}")
    if dev >= ORACLE_CHECK_TOL:
        click.echo(f"error: deviation exceeds {ORACLE_CHECK_TOL:.0e}", err=True)
        raise SystemExit(3)
    click.echo("engine and oracle agree")
