"""Classical reference models and comparison metrics.

The Chow-Liu tree is the standard statistical baseline: fit the maximum
mutual-information spanning tree, orient it at variable 0, estimate the
conditionals, and sample ancestrally. Covariances are computed in the
+/-1 parity variables z_i = 1 - 2 x_i on both the data and model side so
the two are directly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import BitDataset
from .engine import FbmModel, ZString, zstring_batch
from .errors import InvalidInputError

CPT_ROW_TOL = 1e-12


@dataclass(frozen=True)
class ChowLiuTree:
    """Tree-structured Bayes net over binary variables.

    cpt[v, b, x] is P(x_v = x | parent value b); the root's two rows both
    hold its marginal so the table shape is uniform.
    """

    root: int
    parent: tuple[int | None, ...]
    cpt: np.ndarray

    def __post_init__(self):
        n = len(self.parent)
        if not (0 <= self.root < n):
            raise InvalidInputError(f"root {self.root} out of range for {n} variables")
        if self.parent[self.root] is not None:
            raise InvalidInputError("the root must have no parent")
        if self.cpt.shape != (n, 2, 2):
            raise InvalidInputError(
                f"cpt must have shape ({n}, 2, 2), got {self.cpt.shape}"
            )
        if np.max(np.abs(self.cpt.sum(axis=2) - 1.0)) > CPT_ROW_TOL:
            raise InvalidInputError("conditional probability rows must sum to 1")
        # Walking parent links from every node must reach the root without
        # revisiting anything; that rules out cycles and extra components.
        for v in range(n):
            seen = set()
            node = v
            while node != self.root:
                if node in seen or self.parent[node] is None:
                    raise InvalidInputError("parent links do not form a rooted tree")
                seen.add(node)
                node = self.parent[node]

    @property
    def n(self) -> int:
        return len(self.parent)

    def sampling_order(self) -> list[int]:
        """Variables in breadth-first order from the root."""
        children: list[list[int]] = [[] for _ in range(self.n)]
        for v, p in enumerate(self.parent):
            if p is not None:
                children[p].append(v)
        order = [self.root]
        for node in order:
            order.extend(children[node])
        return order


def pairwise_mutual_information(data: BitDataset) -> np.ndarray:
    """Empirical mutual information in nats for every variable pair.

    Plain maximum-likelihood estimates; zero-count cells contribute zero.
    Constant columns simply yield zero rows, they are not an error.
    """
    if len(data) < 2:
        raise InvalidInputError("mutual information needs at least 2 samples")
    x = data.rows.astype(np.float64)
    count = len(data)
    p1 = x.mean(axis=0)
    p11 = (x.T @ x) / count
    p10 = (x.T @ (1.0 - x)) / count
    p01 = p10.T
    p00 = 1.0 - p11 - p10 - p01
    mi = np.zeros((data.n, data.n))
    for joint, pa, pb in (
        (p00, 1.0 - p1[:, None], 1.0 - p1[None, :]),
        (p01, 1.0 - p1[:, None], p1[None, :]),
        (p10, p1[:, None], 1.0 - p1[None, :]),
        (p11, p1[:, None], p1[None, :]),
    ):
        mask = joint > 0
        term = np.zeros_like(mi)
        term[mask] = joint[mask] * np.log(joint[mask] / (pa * pb + 1e-300)[mask])
        mi += term
    np.fill_diagonal(mi, 0.0)
    return mi


def _max_weight_tree(weights: np.ndarray) -> list[tuple[int, int]]:
    """Kruskal with deterministic (weight, then index) ordering."""
    n = weights.shape[0]
    edges = sorted(
        ((i, j) for i in range(n) for j in range(i + 1, n)),
        key=lambda e: (-weights[e], e),
    )
    root = list(range(n))

    def find(a: int) -> int:
        while root[a] != a:
            root[a] = root[root[a]]
            a = root[a]
        return a

    chosen = []
    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            root[ri] = rj
            chosen.append((i, j))
            if len(chosen) == n - 1:
                break
    return chosen


def chow_liu_fit(data: BitDataset) -> ChowLiuTree:
    """Fit the maximum-MI spanning tree rooted at variable 0.

    Edge weights are raw empirical MI; the conditional tables use add-one
    smoothing so sampled models never assign probability zero to an
    observed-adjacent configuration.
    """
    if len(data) < 2:
        raise InvalidInputError("fitting needs at least 2 samples")
    n = data.n
    mi = pairwise_mutual_information(data)
    chosen = _max_weight_tree(mi)

    neighbors: list[list[int]] = [[] for _ in range(n)]
    for i, j in chosen:
        neighbors[i].append(j)
        neighbors[j].append(i)
    parent: list[int | None] = [None] * n
    order = [0]
    visited = {0}
    for node in order:
        for nb in sorted(neighbors[node]):
            if nb not in visited:
                visited.add(nb)
                parent[nb] = node
                order.append(nb)

    x = data.rows
    count = len(data)
    cpt = np.empty((n, 2, 2))
    ones0 = int(x[:, 0].sum())
    cpt[0, :, 1] = (ones0 + 1.0) / (count + 2.0)
    cpt[0, :, 0] = 1.0 - cpt[0, :, 1]
    for v in range(n):
        p = parent[v]
        if p is None:
            continue
        for b in (0, 1):
            rows = x[:, p] == b
            n_b = int(rows.sum())
            n_b1 = int(x[rows, v].sum())
            cpt[v, b, 1] = (n_b1 + 1.0) / (n_b + 2.0)
            cpt[v, b, 0] = 1.0 - cpt[v, b, 1]
    return ChowLiuTree(0, tuple(parent), cpt)


def chow_liu_sample(tree: ChowLiuTree, count: int, rng) -> BitDataset:
    """Ancestral sampling from the tree distribution."""
    if count < 1:
        raise InvalidInputError(f"sample count must be positive, got {count}")
    rng = np.random.default_rng(rng)
    rows = np.zeros((count, tree.n), dtype=np.uint8)
    u = rng.random((count, tree.n))
    for v in tree.sampling_order():
        p = tree.parent[v]
        parent_bits = np.zeros(count, dtype=np.intp) if p is None else rows[:, p]
        rows[:, v] = u[:, v] < tree.cpt[v, parent_bits, 1]
    return BitDataset(tree.n, rows)


def empirical_covariance(data: BitDataset) -> np.ndarray:
    """Covariance of the parity variables z_i over the dataset."""
    if len(data) == 0:
        raise InvalidInputError("covariance of an empty dataset is undefined")
    z = 1.0 - 2.0 * data.rows.astype(np.float64)
    mean = z.mean(axis=0)
    second = (z.T @ z) / len(data)
    return second - np.outer(mean, mean)


def model_covariance(model: FbmModel, workers=None) -> np.ndarray:
    """The model's parity covariance matrix from its Z-string expectations."""
    n = model.n
    singles = [ZString((i,)) for i in range(n)]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    doubles = [ZString(p) for p in pairs]
    vals = np.asarray(zstring_batch(model, singles + doubles, ell_max=2,
                                    workers=workers))
    first = vals[:n]
    cov = np.diag(1.0 - first**2)
    for (i, j), v in zip(pairs, vals[n:]):
        cov[i, j] = cov[j, i] = v - first[i] * first[j]
    return cov
