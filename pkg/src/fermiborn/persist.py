"""Model checkpoints and training-history files.

Checkpoints are JSON with a fixed field set; angles are printed with 17
significant digits so doubles survive a round trip exactly. History files are
plain CSV. Both are written atomically (temp file in the destination
directory, then rename) so an interrupted run never leaves a torn file.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

from .engine import FbmModel
from .errors import InvalidInputError
from .flo import FloAnsatz, angles_per_layer
from .magic import MagicAngles

FORMAT_VERSION = 1

HISTORY_HEADER = ("epoch", "loss", "grad_norm", "seconds")

_MODEL_FIELDS = {"version", "N", "k", "m", "layers", "alpha", "theta", "seed", "epoch"}


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def save_model(model: FbmModel, path: str | Path, *, seed: int, epoch: int) -> None:
    """Write a checkpoint; `epoch` is the number of completed epochs."""
    alpha = ", ".join(_fmt(a) for a in model.magic.alpha)
    theta_rows = ",\n".join(
        "    [" + ", ".join(_fmt(t) for t in row) + "]"
        for row in model.ansatz.angles
    )
    text = (
        "{\n"
        f'  "version": {FORMAT_VERSION},\n'
        f'  "N": {model.N},\n'
        f'  "k": {model.k},\n'
        f'  "m": {model.m},\n'
        f'  "layers": {model.ansatz.layers},\n'
        f'  "alpha": [{alpha}],\n'
        '  "theta": [\n'
        f"{theta_rows}\n"
        "  ],\n"
        f'  "seed": {int(seed)},\n'
        f'  "epoch": {int(epoch)}\n'
        "}\n"
    )
    _atomic_write(path, text)


def load_model(path: str | Path) -> tuple[FbmModel, int, int]:
    """Read a checkpoint; returns (model, seed, epoch)."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot read model file {path}: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"model file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidInputError(f"model file {path}: top level must be an object")
    extra = set(doc) - _MODEL_FIELDS
    missing = _MODEL_FIELDS - set(doc)
    if extra or missing:
        raise InvalidInputError(
            f"model file {path}: unknown fields {sorted(extra)}, "
            f"missing fields {sorted(missing)}"
        )
    if doc["version"] != FORMAT_VERSION:
        raise InvalidInputError(
            f"model file {path}: unsupported version {doc['version']!r}"
        )
    for key in ("N", "k", "m", "layers", "seed", "epoch"):
        if not isinstance(doc[key], int) or isinstance(doc[key], bool):
            raise InvalidInputError(f"model file {path}: field {key} must be an integer")
    n_regs, layers = doc["N"], doc["layers"]
    d = 4 * n_regs
    alpha = _float_array(doc["alpha"], (n_regs,), "alpha", path)
    theta = _float_array(doc["theta"], (layers, angles_per_layer(d)), "theta", path)
    model = FbmModel(
        MagicAngles(n_regs, alpha),
        FloAnsatz(d, layers, theta),
        k=doc["k"],
        m=doc["m"],
    )
    return model, doc["seed"], doc["epoch"]


def _float_array(value, shape: tuple[int, ...], name: str, path) -> np.ndarray:
    try:
        arr = np.array(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"model file {path}: field {name} is not numeric") from exc
    if arr.shape != shape:
        raise InvalidInputError(
            f"model file {path}: field {name} has shape {arr.shape}, expected {shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"model file {path}: field {name} contains non-finite values")
    return arr


def write_history(path: str | Path,
                  rows: Iterable[tuple[int, float, float, float]]) -> None:
    """Write the full history CSV (header + one row per epoch)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTORY_HEADER)
    for epoch, loss, grad_norm, seconds in rows:
        writer.writerow([int(epoch), _fmt(loss), _fmt(grad_norm), _fmt(seconds)])
    _atomic_write(path, buf.getvalue())


def read_history(path: str | Path) -> list[tuple[int, float, float, float]]:
    """Read a history CSV back into (epoch, loss, grad_norm, seconds) rows."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot read history file {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise InvalidInputError(f"history file {path} is empty") from None
    if tuple(header) != HISTORY_HEADER:
        raise InvalidInputError(
            f"history file {path}: expected header {','.join(HISTORY_HEADER)}"
        )
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            epoch = int(row[0])
            loss, grad_norm, seconds = (float(v) for v in row[1:4])
        except (ValueError, IndexError) as exc:
            raise InvalidInputError(
                f"history file {path}: malformed row at line {lineno}"
            ) from exc
        if not all(math.isfinite(v) for v in (loss, grad_norm, seconds)):
            raise InvalidInputError(
                f"history file {path}: non-finite value at line {lineno}"
            )
        rows.append((epoch, loss, grad_norm, seconds))
    return rows
