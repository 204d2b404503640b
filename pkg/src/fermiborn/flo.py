"""Parametrized fermionic-linear-optics ansatz over Majorana modes.

A model layer is a brickwork of adjacent-pair Givens rotations on the 2d
Majorana indices: 2d sublayers alternating between even pairs (0,1), (2,3), ...
and odd pairs (1,2), (3,4), ..., for d*(2d-1) angles per layer, which is
exactly dim SO(2d), so one layer can reach any FLO transformation. This module builds
the SO(2d) matrix from angles, evolves covariance blocks through it, and
inverts the construction (any special-orthogonal matrix back to one brickwork
layer), which is what makes multi-layer models compilable to a single layer.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DecompositionError, InvalidInputError
from .skewlin import SkewMatrix

#: Elementwise tolerance for orthogonality / unit determinant validation.
ORTHO_ATOL = 1e-10


def angles_per_layer(d: int) -> int:
    """Number of Givens angles in one brickwork layer: d*(2d-1) = dim SO(2d)."""
    return d * (2 * d - 1)


@lru_cache(maxsize=None)
def brickwork_layout(d: int) -> tuple[tuple[np.ndarray, ...], tuple[int, ...]]:
    """Majorana pair indices per sublayer and their offsets into a flat layer.

    Sublayer s (s = 0..2d-1) rotates pairs (p, p+1) with p = s mod 2,
    s mod 2 + 2, ... Even sublayers hold d rotations, odd ones d-1. Angles are
    stored sublayer-major, pairs ascending within a sublayer.
    """
    pairs = []
    offsets = []
    off = 0
    for s in range(2 * d):
        p = np.arange(s % 2, 2 * d - 1, 2, dtype=np.intp)
        pairs.append(p)
        offsets.append(off)
        off += len(p)
    assert off == angles_per_layer(d)
    return tuple(pairs), tuple(offsets)


@dataclass
class FloAnsatz:
    """Givens angles for a stack of FLO layers on d fermionic modes."""

    d: int
    layers: int
    angles: np.ndarray

    def __post_init__(self):
        if self.d < 1 or self.layers < 1:
            raise InvalidInputError(
                f"need d >= 1 and layers >= 1, got d={self.d}, layers={self.layers}"
            )
        a = np.asarray(self.angles, dtype=np.float64)
        expected = (self.layers, angles_per_layer(self.d))
        if a.shape != expected:
            raise InvalidInputError(
                f"angles must have shape {expected} (layers x d(2d-1)), got {a.shape}"
            )
        if not np.all(np.isfinite(a)):
            raise InvalidInputError("angles must be finite")
        self.angles = a

    @classmethod
    def random(cls, d: int, layers: int, rng: np.random.Generator) -> "FloAnsatz":
        """Angles drawn uniformly from [0, 2*pi); the standard cold start."""
        return cls(d, layers, rng.uniform(0.0, 2.0 * np.pi, (layers, angles_per_layer(d))))

    @classmethod
    def identity(cls, d: int, layers: int = 1) -> "FloAnsatz":
        return cls(d, layers, np.zeros((layers, angles_per_layer(d))))


@dataclass
class OrthogonalMatrix:
    """A validated element of SO(2d) acting on Majorana indices."""

    mat: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidInputError(f"expected a square matrix, got shape {m.shape}")
        dim = m.shape[0]
        if dim % 2 != 0:
            raise InvalidInputError(f"dimension must be even, got {dim}")
        gram_err = np.max(np.abs(m.T @ m - np.eye(dim)))
        if gram_err > ORTHO_ATOL:
            raise InvalidInputError(
                f"matrix is not orthogonal: max |O^T O - I| = {gram_err:.3e}"
            )
        det = np.linalg.det(m)
        if abs(det - 1.0) > ORTHO_ATOL:
            raise InvalidInputError(f"determinant must be +1, got {det!r}")
        self.mat = m

    @property
    def dim(self) -> int:
        return self.mat.shape[0]


def apply_pair_rotations(x: np.ndarray, pairs: np.ndarray, theta: np.ndarray,
                         transpose: bool = False) -> None:
    """In-place left-multiplication of x by one sublayer of Givens rotations.

    The rotation on pair (p, p+1) maps row p to cos(t) row_p + sin(t) row_{p+1}
    and row p+1 to -sin(t) row_p + cos(t) row_{p+1}. All pairs in a sublayer
    are disjoint, so the update is a single vectorized gather/scatter.
    With transpose=True the inverse rotations are applied.
    """
    if len(pairs) == 0:
        return
    c = np.cos(theta)
    s = np.sin(theta)
    if transpose:
        s = -s
    top = x[pairs, :]
    bot = x[pairs + 1, :]
    x[pairs, :] = c[:, None] * top + s[:, None] * bot
    x[pairs + 1, :] = -s[:, None] * top + c[:, None] * bot


def build_orthogonal(ansatz: FloAnsatz) -> OrthogonalMatrix:
    """Compose all layers' Givens rotations into a single SO(2d) matrix.

    Rotations are applied in circuit order; a later sublayer multiplies from
    the left, matching the Heisenberg rule O_total = O_2 O_1 for U = U_2 U_1.
    """
    return OrthogonalMatrix(_build_raw(ansatz.d, ansatz.angles))


def _build_raw(d: int, angles: np.ndarray) -> np.ndarray:
    o = np.eye(2 * d)
    pairs, offsets = brickwork_layout(d)
    for layer in range(angles.shape[0]):
        flat = angles[layer]
        for s in range(2 * d):
            p = pairs[s]
            apply_pair_rotations(o, p, flat[offsets[s]:offsets[s] + len(p)])
    return o


def evolve_block_covariance(o: OrthogonalMatrix, blocks: list, row_indices) -> SkewMatrix:
    """Principal submatrix of O (direct sum of blocks) O^T on the given rows.

    Computed register by register (rows = O[row_indices, 8k:8k+8]), so the
    cost is O(len(rows)^2 * 64) per register and the full 2d x 2d conjugation
    is never materialized. This additivity over registers is what the
    expectation engine's inclusion-exclusion terms lean on.
    """
    idx = np.asarray(list(row_indices), dtype=np.intp)
    dim = o.dim
    if len(blocks) * 8 != dim:
        raise InvalidInputError(
            f"got {len(blocks)} 8x8 blocks for dimension {dim}; need {dim // 8}"
        )
    if idx.size == 0 or np.any(idx < 0) or np.any(idx >= dim) or np.any(np.diff(idx) <= 0):
        raise InvalidInputError(
            f"row indices must be strictly increasing within [0, {dim})"
        )
    mats = []
    for b in blocks:
        m = b.mat if isinstance(b, SkewMatrix) else np.asarray(b)
        if m.shape != (8, 8):
            raise InvalidInputError(f"blocks must be 8x8, got {m.shape}")
        mats.append(m)
    dtype = np.result_type(np.float64, *(m.dtype for m in mats))
    w = o.mat[idx, :]
    out = np.zeros((idx.size, idx.size), dtype=dtype)
    for k, m in enumerate(mats):
        wk = w[:, 8 * k:8 * k + 8]
        out += wk @ m @ wk.T
    return SkewMatrix(out)


# -- inverse construction: SO(m) back to one brickwork layer -----------------


def brickwork_angles(u: np.ndarray, atol: float = 1e-8) -> np.ndarray:
    """Factor a special-orthogonal matrix into one layer of brickwork angles.

    Returns a flat angle vector a with _build_raw(m/2, a[None]) equal to u up
    to ~1e-12. Works by a Clements-style double-sided Givens elimination to a
    +/-1 diagonal, conversion of all factors to one side, and absorption of the
    diagonal into the first two sublayers via pi-shifted rotations (det +1
    guarantees an even number of -1 entries, so full absorption always works).

    Raises DecompositionError if u is not special-orthogonal within atol or if
    the reconstruction check fails.
    """
    u = np.asarray(u, dtype=np.float64)
    m = u.shape[0]
    if u.ndim != 2 or u.shape[1] != m or m % 2 != 0 or m < 2:
        raise InvalidInputError(f"expected an even-dimensional square matrix, got {u.shape}")
    if np.max(np.abs(u.T @ u - np.eye(m))) > atol:
        raise DecompositionError("input lost orthogonality beyond tolerance")
    if abs(np.linalg.det(u) - 1.0) > max(atol, 1e-8):
        raise DecompositionError("input determinant is not +1")

    work = u.copy()
    right_ops: list[tuple[int, float]] = []  # (pair p, angle), applied as work @ R
    left_ops: list[tuple[int, float]] = []   # (pair p, angle), applied as R @ work

    for i in range(1, m):
        if i % 2 == 1:
            for j in range(i - 1, -1, -1):
                r, p = m - i + j, j
                phi = float(np.arctan2(work[r, p], work[r, p + 1]))
                _rotate_cols(work, p, phi)
                right_ops.append((p, phi))
        else:
            for j in range(i):
                r, p = m - i + j, m - i + j - 1
                phi = float(np.arctan2(work[r, j], work[p, j]))
                _rotate_rows(work, p, phi)
                left_ops.append((p, phi))

    diag = np.diagonal(work).copy()
    signs = np.where(diag >= 0.0, 1.0, -1.0)

    # work is now diagonal with +/-1 entries:  L_k...L_1 u R_1...R_q = D, so
    # u = (R_1...R_q applied first, transposed and reversed)(L transposed) D;
    # in circuit order (first applied first): R_1^T, ..., R_q^T, L_k^T, ..., L_1^T
    # preceded by D. Commuting D through the R block flips an angle whenever
    # the diagonal signs across its pair differ, and leaves D rightmost.
    circuit: list[tuple[int, float]] = []
    for p, phi in right_ops:
        flip = signs[p] * signs[p + 1]
        circuit.append((p, -phi * flip))
    for p, phi in reversed(left_ops):
        circuit.append((p, -phi))

    d = m // 2
    pairs, offsets = brickwork_layout(d)
    slot_of_pair = {}
    for s in range(2 * d):
        for k, p in enumerate(pairs[s]):
            slot_of_pair[(s, int(p))] = offsets[s] + k
    grid = np.zeros((2 * d, 2 * d - 1))  # [sublayer, pair] angle grid
    frontier = np.full(m, -1, dtype=np.intp)  # last sublayer touching each wire
    for p, phi in circuit:
        s = int(max(frontier[p], frontier[p + 1])) + 1
        if s % 2 != p % 2:
            s += 1
        if s >= 2 * d:
            raise DecompositionError("rotation schedule exceeded the brickwork depth")
        grid[s, p] = phi
        frontier[p] = frontier[p + 1] = s

    # Absorb D = diag(signs). Pair up the -1 positions (even count since
    # det = +1); each pair (a, b) is a chain of pi-rotations on (j, j+1) for
    # j = a..b-1, applied before sublayer 0. Even-pair elements add pi in
    # sublayer 0; odd-pair elements first flip the adjacent sublayer-0 angles
    # (conjugation by the diagonal), then add pi in sublayer 1.
    neg = np.flatnonzero(signs < 0)
    for a, b in zip(neg[0::2], neg[1::2]):
        for j in range(int(a), int(b)):
            if j % 2 == 0:
                grid[0, j] += np.pi
            else:
                grid[0, j - 1] = -grid[0, j - 1]
                if j + 1 <= m - 2:
                    grid[0, j + 1] = -grid[0, j + 1]
                grid[1, j] += np.pi

    flat = np.zeros(angles_per_layer(d))
    for s in range(2 * d):
        for p in pairs[s]:
            flat[slot_of_pair[(s, int(p))]] = grid[s, p]
    flat = np.mod(flat, 2.0 * np.pi)

    rebuilt = _build_raw(d, flat[None, :])
    err = np.max(np.abs(rebuilt - u))
    if err > 1e-10:
        raise DecompositionError(f"brickwork reconstruction error {err:.3e}")
    return flat


def _rotate_cols(x: np.ndarray, p: int, phi: float) -> None:
    """x <- x @ R_p(phi) in place (mixes columns p, p+1)."""
    c, s = np.cos(phi), np.sin(phi)
    cp = x[:, p].copy()
    x[:, p] = c * cp - s * x[:, p + 1]
    x[:, p + 1] = s * cp + c * x[:, p + 1]


def _rotate_rows(x: np.ndarray, p: int, phi: float) -> None:
    """x <- R_p(phi) @ x in place (mixes rows p, p+1)."""
    c, s = np.cos(phi), np.sin(phi)
    rp = x[p, :].copy()
    x[p, :] = c * rp + s * x[p + 1, :]
    x[p + 1, :] = -s * rp + c * x[p + 1, :]
