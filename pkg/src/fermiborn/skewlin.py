"""Complex skew-symmetric linear algebra: Pfaffians and principal submatrices.

Everything downstream (covariance evolution, the expectation engine) reduces
to Pfaffians of small skew-symmetric matrices, so this module is deliberately
small and heavily cross-checked: the Parlett-Reid elimination is the production
path, and :func:`pfaffian_combinatorial` provides an independent perfect-matching
formula used as the test oracle for sizes up to ~12.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

#: Absolute tolerance for the skew-symmetry check at construction.
SKEW_ATOL = 1e-12

#: Pivot magnitudes below this are treated as structural zeros.
PIVOT_TOL = 1e-14


@dataclass
class SkewMatrix:
    """An even-dimensional skew-symmetric matrix.

    The constructor validates skew-symmetry to absolute tolerance 1e-12 and
    then symmetrizes the stored array as (A - A^T)/2, so downstream code can
    rely on exact skew-symmetry. Real and complex dtypes are both accepted.
    """

    mat: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.mat)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidInputError(f"expected a square matrix, got shape {a.shape}")
        n = a.shape[0]
        if n == 0 or n % 2 != 0:
            raise InvalidInputError(f"dimension must be even and positive, got {n}")
        if not np.issubdtype(a.dtype, np.number):
            raise InvalidInputError(f"non-numeric dtype {a.dtype}")
        a = a.astype(np.result_type(a.dtype, np.float64), copy=True)
        drift = np.max(np.abs(a + a.T))
        if drift > SKEW_ATOL:
            raise InvalidInputError(
                f"matrix is not skew-symmetric: max |A + A^T| = {drift:.3e} > {SKEW_ATOL}"
            )
        self.mat = (a - a.T) / 2.0

    @property
    def dim(self) -> int:
        return self.mat.shape[0]


def principal_submatrix(a: SkewMatrix, rows: Sequence[int]) -> SkewMatrix:
    """Restrict to the given rows and columns.

    Args:
        a: The matrix to restrict.
        rows: Strictly increasing indices in [0, a.dim).

    Returns:
        The submatrix ``a.mat[rows][:, rows]`` as a new SkewMatrix.
    """
    idx = list(rows)
    if not idx:
        raise InvalidInputError("row list must be nonempty")
    if any(not (0 <= r < a.dim) for r in idx):
        raise InvalidInputError(f"row index out of range for dim {a.dim}: {idx}")
    if any(p >= q for p, q in zip(idx, idx[1:])):
        raise InvalidInputError(f"row indices must be strictly increasing: {idx}")
    sub = a.mat[np.ix_(idx, idx)]
    return SkewMatrix(sub)


def pfaffian(a: SkewMatrix | np.ndarray) -> complex:
    """Pfaffian via Parlett-Reid elimination with partial pivoting.

    Each row/column swap flips the sign; a working column whose candidates all
    fall below 1e-14 in magnitude means the matrix is structurally singular and
    the Pfaffian is exactly 0.

    Returns a Python float for real input, complex otherwise, satisfying
    pf(A)^2 = det(A).
    """
    if not isinstance(a, SkewMatrix):
        a = SkewMatrix(np.asarray(a))
    val = _pfaffian_inplace(a.mat.copy())
    if np.iscomplexobj(a.mat):
        return complex(val)
    return float(np.real(val))


def _pfaffian_inplace(m: np.ndarray) -> complex:
    """Core Parlett-Reid loop; destroys its argument. No validation."""
    n = m.shape[0]
    pf = 1.0 + 0.0j if np.iscomplexobj(m) else 1.0
    for k in range(0, n - 2, 2):
        # Pivot: bring the largest-magnitude candidate of column k into (k+1, k).
        col = np.abs(m[k + 1:, k])
        kp = k + 1 + int(np.argmax(col))
        if np.abs(m[kp, k]) < PIVOT_TOL:
            return 0.0
        if kp != k + 1:
            m[[k + 1, kp], :] = m[[kp, k + 1], :]
            m[:, [k + 1, kp]] = m[:, [kp, k + 1]]
            pf = -pf
        pivot = m[k + 1, k]
        pf *= -pivot  # pf of the decoupled 2x2 block [[0, m[k,k+1]], [...]]
        # Eliminate column k below row k+1 (and row k right of column k+1)
        # with a symmetric Gauss transform; the trailing block stays skew.
        tail = slice(k + 2, n)
        tau = m[tail, k] / pivot
        w = m[tail, k + 1]
        m[tail, tail.start:] += np.outer(tau, w) - np.outer(w, tau)
    pf *= m[n - 2, n - 1]
    return pf


@lru_cache(maxsize=None)
def perfect_matchings(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """All perfect matchings of {0..dim-1} with their permutation signs.

    Returns:
        (pairs, signs): pairs has shape (n_match, dim/2, 2) with each pair
        (p, q), p < q, and signs has shape (n_match,) with entries +/-1, such
        that pf(A) = sum_m signs[m] * prod_i A[pairs[m, i, 0], pairs[m, i, 1]].

    The count grows as (dim-1)!! so this is only meant for dim <= 12.
    """
    if dim <= 0 or dim % 2 != 0:
        raise InvalidInputError(f"dimension must be even and positive, got {dim}")
    if dim > 12:
        raise InvalidInputError(f"perfect-matching enumeration not intended for dim {dim}")
    matchings: list[list[tuple[int, int]]] = []
    signs: list[int] = []

    def build(remaining: list[int], acc: list[tuple[int, int]]):
        if not remaining:
            perm = [x for pair in acc for x in pair]
            signs.append(_perm_sign(perm))
            matchings.append(list(acc))
            return
        first = remaining[0]
        for j in range(1, len(remaining)):
            acc.append((first, remaining[j]))
            build(remaining[1:j] + remaining[j + 1:], acc)
            acc.pop()

    build(list(range(dim)), [])
    return np.array(matchings, dtype=np.intp), np.array(signs, dtype=np.float64)


def _perm_sign(perm: Sequence[int]) -> int:
    """Sign of a permutation given as a sequence of distinct integers."""
    seen = [False] * len(perm)
    sign = 1
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def pfaffian_combinatorial(a: SkewMatrix | np.ndarray) -> complex:
    """Pfaffian by direct perfect-matching summation (reference formula).

    Exponentially slower than :func:`pfaffian` but free of pivoting and
    elimination entirely, which makes it the independent oracle of choice
    for small matrices.
    """
    if not isinstance(a, SkewMatrix):
        a = SkewMatrix(np.asarray(a))
    pairs, signs = perfect_matchings(a.dim)
    prods = a.mat[pairs[:, :, 0], pairs[:, :, 1]].prod(axis=1)
    val = (signs * prods).sum()
    if np.iscomplexobj(a.mat):
        return complex(val)
    return float(np.real(val))


def pfaffian_gradient(a: SkewMatrix | np.ndarray) -> np.ndarray:
    """Matrix G with d pf(A) = sum_{p<q} G[p,q] dA[p,q] for skew perturbations.

    Uses the identity G = -pf(A) * A^{-1}, which breaks down near pf(A) = 0;
    below |pf| = 1e-10 it switches to the minor (cofactor) expansion
    G[p,q] = (-1)^{p+q+1} pf(A with rows and columns p, q deleted), which is
    exact for any A. G is returned skew-extended (G[q,p] = -G[p,q]).
    """
    if not isinstance(a, SkewMatrix):
        a = SkewMatrix(np.asarray(a))
    m = a.mat
    n = a.dim
    pf = _pfaffian_inplace(m.copy())
    if abs(pf) >= 1e-10:
        return -pf * np.linalg.inv(m)
    g = np.zeros_like(m)
    if n == 2:
        g[0, 1] = 1.0
        g[1, 0] = -1.0
        return g
    for p in range(n):
        for q in range(p + 1, n):
            keep = [i for i in range(n) if i not in (p, q)]
            minor = m[np.ix_(keep, keep)]
            val = _pfaffian_inplace(minor.copy()) * (-1) ** (p + q + 1)
            g[p, q] = val
            g[q, p] = -val
    return g
