"""MMD^2 loss in expectation-value form.

For a Gaussian kernel on bitstrings, MMD^2 between the data law and the model
is an expectation of squared Z-string-expectation differences, where strings
are drawn by including each variable independently with a bandwidth-dependent
probability. The loss is therefore estimated entirely from Z-string
expectations: sample (or enumerate) strings, evaluate both sides, average the
squared gaps. Truncation to short strings is deliberate; it is the locality
cutoff the experiments study.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datagen import BitDataset
from .engine import ZString, all_zstrings
from .errors import DegenerateBandwidthError, InvalidInputError, SamplingFailureError

#: Rejection-sampling attempt budget per accepted string.
MAX_REJECTIONS = 10 ** 6


@dataclass(frozen=True)
class KernelSpec:
    """One kernel term of the loss.

    kind "gaussian" draws strings from the kernel's induced distribution,
    truncated to lengths 1..ell_max; n_ops is the number of draws, or None to
    enumerate every string up to the cutoff with its kernel probability as
    weight (the exact expectation of the sampled estimator, and the only
    usable mode when the acceptance region has tiny probability). kind
    "linear" means the plain sum of squared singleton differences; sigma and
    n_ops are unused.
    """

    kind: str
    sigma: float | None = None
    ell_max: int = 2
    n_ops: int | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "linear"):
            raise InvalidInputError(f"kernel kind must be gaussian or linear, got {self.kind!r}")
        if self.kind == "gaussian":
            if self.sigma is None or not self.sigma > 0:
                raise InvalidInputError(f"gaussian kernel needs sigma > 0, got {self.sigma!r}")
            if self.n_ops is not None and self.n_ops < 1:
                raise InvalidInputError(f"n_ops must be >= 1 when sampling, got {self.n_ops}")
        if self.ell_max < 1:
            raise InvalidInputError(f"ell_max must be >= 1, got {self.ell_max}")


@dataclass
class LossEstimate:
    """Assembled loss: overall value, per-kernel values, per-string detail."""

    value: float
    per_bandwidth: list[tuple[float | None, float]]
    strings_used: list[tuple[ZString, float]]


def inclusion_probability(sigma: float) -> float:
    """Per-variable inclusion probability p of the Gaussian-kernel string law."""
    return (1.0 - np.exp(-1.0 / (2.0 * sigma))) / 2.0


def kernel_weight(sigma: float, string_length: int, n: int) -> float:
    """Probability of one specific string under the kernel's induced law."""
    if not 0 <= string_length <= n:
        raise InvalidInputError(f"string length {string_length} out of range [0, {n}]")
    p = inclusion_probability(sigma)
    return float((1.0 - p) ** (n - string_length) * p ** string_length)


def sample_zstrings(spec: KernelSpec, n: int, rng) -> list[ZString]:
    """Draw spec.n_ops strings by independent inclusion, truncated to ell_max.

    Draws with length 0 or length > ell_max are rejected and redrawn.
    Duplicates are kept; a string drawn twice counts twice in the estimator.
    """
    if spec.kind != "gaussian" or spec.n_ops is None:
        raise InvalidInputError("sampling requires a gaussian kernel with n_ops set")
    if n < 1:
        raise InvalidInputError(f"need n >= 1 variables, got {n}")
    rng = np.random.default_rng(rng)
    p = inclusion_probability(spec.sigma)
    ell_cap = min(spec.ell_max, n)
    out = []
    for _ in range(spec.n_ops):
        for attempt in range(MAX_REJECTIONS):
            mask = rng.random(n) < p
            ell = int(mask.sum())
            if 1 <= ell <= ell_cap:
                out.append(ZString(tuple(np.flatnonzero(mask))))
                break
        else:
            raise SamplingFailureError(
                f"no string of length 1..{ell_cap} accepted in {MAX_REJECTIONS} draws "
                f"(inclusion probability {p:.3g} on {n} variables)"
            )
    return out


def enumerate_zstrings(spec: KernelSpec, n: int) -> list[ZString]:
    """All strings the spec's estimator can produce, in lexicographic order."""
    if spec.kind == "linear":
        return [ZString((v,)) for v in range(n)]
    return all_zstrings(n, min(spec.ell_max, n))


def target_expectations(data: BitDataset, strings: Sequence[ZString]) -> np.ndarray:
    """Empirical <Z_z> per string: the dataset's mean parity on those bits."""
    if len(data) == 0:
        raise InvalidInputError("cannot estimate expectations from an empty dataset")
    out = np.empty(len(strings))
    for i, z in enumerate(strings):
        if z.indices and z.indices[-1] >= data.n:
            raise InvalidInputError(
                f"string {z.indices} out of range for {data.n}-variable data"
            )
        parity = data.rows[:, list(z.indices)].sum(axis=1) % 2
        out[i] = 1.0 - 2.0 * float(parity.mean())
    return out


def string_weights(spec: KernelSpec, strings: Sequence[ZString]) -> np.ndarray:
    """Relative weight of each string inside the spec's estimator.

    Sampled and linear groups weight every drawn string equally. Enumerated
    groups use the kernel probabilities restricted to the accepted lengths,
    i.e. the conditional law the rejection sampler targets; the common
    (1-p)^n factor cancels under normalization, so only the odds ratio
    r^ell matters.
    """
    if spec.kind != "gaussian" or spec.n_ops is not None:
        return np.ones(len(strings))
    p = inclusion_probability(spec.sigma)
    r = p / (1.0 - p)
    return np.array([r ** len(z) for z in strings])


def _group_value_and_weights(spec: KernelSpec, strings: Sequence[ZString],
                             sq_diffs: np.ndarray) -> tuple[float, np.ndarray]:
    """One kernel's loss value plus the per-string weights that produced it."""
    w = string_weights(spec, strings)
    if spec.kind == "linear":
        return float(sq_diffs.sum()), w
    return float(np.dot(w, sq_diffs) / w.sum()), w


def mmd2_estimate(target_vals: Sequence[np.ndarray], model_vals: Sequence[np.ndarray],
                  specs: Sequence[KernelSpec],
                  strings: Sequence[Sequence[ZString]]) -> LossEstimate:
    """Assemble the loss from per-kernel expectation values.

    All three sequences are grouped per kernel spec. Gaussian sampled groups
    contribute the plain Monte Carlo mean of squared differences; enumerated
    groups the exact kernel-weighted conditional mean; linear groups the
    unweighted sum over singletons. The overall value is the arithmetic mean
    across kernels.
    """
    if not (len(target_vals) == len(model_vals) == len(specs) == len(strings)):
        raise InvalidInputError("target, model, spec, and string groups must align")
    if not specs:
        raise InvalidInputError("at least one kernel spec is required")
    per_bandwidth = []
    strings_used = []
    for spec, t, m, group in zip(specs, target_vals, model_vals, strings):
        t = np.asarray(t, dtype=np.float64)
        m = np.asarray(m, dtype=np.float64)
        if t.shape != m.shape or len(t) != len(group):
            raise InvalidInputError(
                f"group size mismatch: {t.shape} targets, {m.shape} model values, "
                f"{len(group)} strings"
            )
        sq = (m - t) ** 2
        value, _ = _group_value_and_weights(spec, group, sq)
        per_bandwidth.append((spec.sigma, value))
        strings_used.extend(zip(group, sq.tolist()))
    total = float(np.mean([v for _, v in per_bandwidth]))
    return LossEstimate(total, per_bandwidth, strings_used)


def median_heuristic(data: BitDataset, subsample: int, rng) -> tuple[float, float]:
    """Bandwidth pair (m/2, m) from the median pairwise squared distance.

    m is the median of ||x - y||^2 over pairs of distinct rows in a seeded
    subsample; for bit vectors that is just the number of differing
    positions. Zero-distance pairs (duplicate rows) are excluded so that
    duplicating a dataset does not shift the median.
    """
    if len(data) < 2:
        raise InvalidInputError("median heuristic needs at least 2 rows")
    if subsample < 2:
        raise InvalidInputError(f"subsample must be >= 2, got {subsample}")
    rng = np.random.default_rng(rng)
    if len(data) > subsample:
        pick = rng.choice(len(data), size=subsample, replace=False)
        rows = data.rows[np.sort(pick)]
    else:
        rows = data.rows
    x = rows.astype(np.int16)
    gram = x @ x.T
    ones = x.sum(axis=1)
    dist = ones[:, None] + ones[None, :] - 2 * gram  # Hamming distance matrix
    iu = np.triu_indices(len(rows), k=1)
    d = dist[iu].astype(np.float64)
    d = d[d > 0]
    if d.size == 0:
        raise DegenerateBandwidthError(
            "all subsampled rows are identical; no usable pairwise distance"
        )
    m = float(np.median(d))
    return m / 2.0, m
