"""Target datasets: grid Markov networks, Game-of-Life equilibria, file I/O.

Both generators are exact and seeded. The grid Markov network enumerates its
joint distribution (small grids only), so samples come from the true law and
the total variation distance to a trained model is computable without any
estimation error. The Game-of-Life generator produces the high-dimensional
dataset: random grids evolved under Conway's rules until they settle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DatasetFormatError, GenerationFailureError, InvalidInputError
from .oracle import Distribution


@dataclass
class BitDataset:
    """Rows of n binary variables, stored as a (count, n) uint8 array."""

    n: int
    rows: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rows)
        if r.ndim != 2 or r.shape[1] != self.n:
            raise InvalidInputError(
                f"rows must have shape (count, {self.n}), got {r.shape}"
            )
        if r.size and not np.all((r == 0) | (r == 1)):
            raise InvalidInputError("dataset entries must be 0 or 1")
        self.rows = r.astype(np.uint8)

    def __len__(self) -> int:
        return self.rows.shape[0]


@dataclass
class GridMN:
    """A pairwise-grid Markov network with 2x2 cliques and its exact joint."""

    rows: int
    cols: int
    cliques: list[tuple[int, int, int, int]]
    log_factors: np.ndarray   # (n_cliques, 16), indexed by the 4 clique bits
    joint: Distribution


def _index_bits(n: int) -> np.ndarray:
    """All 2^n assignments as a (2^n, n) bit array, variable 0 most significant."""
    idx = np.arange(2 ** n, dtype=np.int64)
    shifts = n - 1 - np.arange(n)
    return ((idx[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


def grid_mn_generate(rows: int, cols: int, seed: int) -> GridMN:
    """Random grid Markov network with i.i.d. standard-normal log-factors.

    Every 2x2 window of the grid is a maximal clique; its factor is a table
    over the 16 joint configurations of the four member variables. Log-normal
    factor values keep the joint strictly positive. The joint is materialized
    by full enumeration, so the grid is capped at 20 variables.
    """
    if rows < 2 or cols < 2:
        raise InvalidInputError(f"grid must be at least 2x2, got {rows}x{cols}")
    n = rows * cols
    if n > 20:
        raise InvalidInputError(
            f"{rows}x{cols} grid has {n} variables; exact enumeration capped at 20"
        )
    rng = np.random.default_rng(seed)
    cliques = []
    for r in range(rows - 1):
        for c in range(cols - 1):
            v = r * cols + c
            cliques.append((v, v + 1, v + cols, v + cols + 1))
    log_factors = rng.standard_normal((len(cliques), 16))
    bits = _index_bits(n)
    logp = np.zeros(2 ** n)
    for k, (a, b, c, d) in enumerate(cliques):
        cfg = (bits[:, a].astype(np.intp) * 8 + bits[:, b] * 4 + bits[:, c] * 2 + bits[:, d])
        logp += log_factors[k, cfg]
    logp -= logp.max()
    p = np.exp(logp)
    p /= p.sum()
    return GridMN(rows, cols, cliques, log_factors, Distribution(n, p))


def mn_sample(mn: GridMN, count: int, seed: int) -> BitDataset:
    """i.i.d. draws from the exact joint by inverse CDF over the support."""
    if count < 1:
        raise InvalidInputError(f"sample count must be positive, got {count}")
    rng = np.random.default_rng(seed)
    cum = np.cumsum(mn.joint.probs)
    cum[-1] = 1.0
    idx = np.searchsorted(cum, rng.random(count), side="right")
    n = mn.rows * mn.cols
    shifts = n - 1 - np.arange(n)
    bits = ((idx[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
    return BitDataset(n, bits)


def life_step(grid: np.ndarray) -> np.ndarray:
    """One Conway update on a fixed-boundary grid (cells outside are dead)."""
    padded = np.pad(grid, 1)
    counts = sum(
        padded[1 + dr:1 + dr + grid.shape[0], 1 + dc:1 + dc + grid.shape[1]]
        for dr in (-1, 0, 1) for dc in (-1, 0, 1)
        if (dr, dc) != (0, 0)
    )
    return ((counts == 3) | ((grid == 1) & (counts == 2))).astype(np.uint8)


def game_of_life_dataset(rows: int, cols: int, steps: int, count: int,
                         seed: int) -> BitDataset:
    """Settled Game-of-Life states from random starts, all-zero finals rejected.

    Each output row has its own seed stream derived from (seed, row index), so
    the dataset does not depend on how generation work is divided up. Fair
    coin flips fill the initial grid; after `steps` updates the flattened
    state is kept unless it died out.
    """
    if rows < 3 or cols < 3:
        raise InvalidInputError(f"grid must be at least 3x3, got {rows}x{cols}")
    if count < 1 or steps < 0:
        raise InvalidInputError("need count >= 1 and steps >= 0")
    out = np.empty((count, rows * cols), dtype=np.uint8)
    attempts = 0
    accepts = 0
    for i in range(count):
        rng = np.random.default_rng((seed, i))
        while True:
            attempts += 1
            if attempts >= 1000 and accepts < attempts / 1000:
                raise GenerationFailureError(
                    f"rejected {attempts - accepts}/{attempts} grids; "
                    "states keep dying out"
                )
            grid = (rng.random((rows, cols)) < 0.5).astype(np.uint8)
            for _ in range(steps):
                grid = life_step(grid)
            if grid.any():
                accepts += 1
                out[i] = grid.reshape(-1)
                break
    return BitDataset(rows * cols, out)


def save_dataset(data: BitDataset, path) -> None:
    """Write one row per line as '0'/'1' characters, LF endings, no header."""
    with open(path, "w", newline="\n") as fh:
        for row in data.rows:
            fh.write("".join("1" if b else "0" for b in row))
            fh.write("\n")


def load_dataset(path) -> BitDataset:
    """Read the text format back; strict about characters and line lengths."""
    rows = []
    n = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line and n is None:
                raise DatasetFormatError("empty line", line_number=lineno)
            if any(ch not in "01" for ch in line):
                raise DatasetFormatError(
                    f"invalid character in {line!r}", line_number=lineno
                )
            if n is None:
                n = len(line)
            elif len(line) != n:
                raise DatasetFormatError(
                    f"row length {len(line)} != {n}", line_number=lineno
                )
            rows.append([1 if ch == "1" else 0 for ch in line])
    if not rows:
        raise DatasetFormatError("dataset file has no rows", line_number=0)
    return BitDataset(n, np.array(rows, dtype=np.uint8))
