"""Training loop: MMD2 loss with exact gradients, Adam updates, checkpoints.

The optimizer works on a flat real vector (alpha concatenated with the
flattened layer angles). Models are rendered from that vector per epoch;
the angle containers may wrap values into [0, 2*pi), which changes nothing
downstream because every quantity in the pipeline is 2*pi-periodic.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from ._backprop import batch_eval
from .datagen import BitDataset
from .engine import FbmModel, ZString
from .errors import (
    InvalidInputError,
    NumericalConsistencyError,
    TrainingAbortError,
)
from .flo import FloAnsatz, brickwork_angles, build_orthogonal
from .loss import (
    KernelSpec,
    enumerate_zstrings,
    mmd2_estimate,
    sample_zstrings,
    string_weights,
    target_expectations,
)
from .magic import MagicAngles
from .persist import save_model

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run."""

    epochs: int
    learning_rate: float
    kernels: tuple[KernelSpec, ...]
    seed: int
    resample_strings: bool = True
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidInputError(f"epochs must be >= 1, got {self.epochs}")
        if not (self.learning_rate > 0):
            raise InvalidInputError(
                f"learning rate must be positive, got {self.learning_rate}"
            )
        if not self.kernels:
            raise InvalidInputError("at least one kernel spec is required")
        if self.checkpoint_every < 0:
            raise InvalidInputError("checkpoint_every must be >= 0")


@dataclass
class OptimizerState:
    """Adam moment estimates; constants are fixed, not configurable."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def fresh(cls, n_params: int) -> "OptimizerState":
        return cls(np.zeros(n_params), np.zeros(n_params))


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    grad_norm: float
    seconds: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def as_rows(self) -> list[tuple[int, float, float, float]]:
        return [(r.epoch, r.loss, r.grad_norm, r.seconds) for r in self.records]

    @property
    def losses(self) -> list[float]:
        return [r.loss for r in self.records]


def strings_for_spec(spec: KernelSpec, n: int, rng) -> list[ZString]:
    """The epoch's observable set for one kernel: enumerated or sampled."""
    if spec.kind == "linear" or spec.n_ops is None:
        return enumerate_zstrings(spec, n)
    return sample_zstrings(spec, n, rng)


def _evaluate(model: FbmModel, data: BitDataset, strings, specs, want_grad: bool):
    if len(strings) != len(specs):
        raise InvalidInputError(
            f"{len(strings)} string groups for {len(specs)} kernel specs"
        )
    targets = [target_expectations(data, group) for group in strings]
    coef = None
    if want_grad:
        coefs = []
        for spec, group in zip(specs, strings):
            w = string_weights(spec, group)
            norm = 1.0 if spec.kind == "linear" else float(w.sum())
            coefs.append(2.0 * w / (len(specs) * norm))
        coef = np.concatenate(coefs)

    flat = [z for group in strings for z in group]
    ell_need = max((len(z) for z in flat), default=1)
    values, alphabar, thetabar = batch_eval(
        model, flat, ell_max=max(ell_need, 1),
        seed_coef=coef,
        seed_target=np.concatenate(targets) if want_grad else None,
    )
    splits = np.cumsum([len(g) for g in strings])[:-1]
    model_groups = np.split(values, splits)
    estimate = mmd2_estimate(targets, model_groups, list(specs), strings)
    if not want_grad:
        return estimate, None
    return estimate, np.concatenate([alphabar, thetabar.ravel()])


def loss_and_gradient(model: FbmModel, data: BitDataset,
                      strings: list[list[ZString]],
                      specs: tuple[KernelSpec, ...] | list[KernelSpec],
                      ) -> tuple[float, np.ndarray]:
    """Loss value plus its gradient over (alpha, theta), flattened.

    `strings` holds one group per kernel spec. The loss is the one
    mmd2_estimate reports on the same groups; the gradient is exact for it
    because every estimator weight depends only on string lengths, never on
    the model values, so each string carries the fixed cotangent
    2 * weight / (n_groups * normalizer) * (value - target).
    """
    estimate, grad = _evaluate(model, data, strings, specs, want_grad=True)
    return estimate.value, grad


def evaluate_loss(model: FbmModel, data: BitDataset,
                  strings: list[list[ZString]],
                  specs: tuple[KernelSpec, ...] | list[KernelSpec]) -> float:
    """The loss alone, skipping the backward pass."""
    estimate, _ = _evaluate(model, data, strings, specs, want_grad=False)
    return estimate.value


def adam_step(params: np.ndarray, grads: np.ndarray, state: OptimizerState,
              lr: float) -> tuple[np.ndarray, OptimizerState]:
    """One bias-corrected Adam update; returns fresh arrays."""
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise InvalidInputError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"state {state.first_moment.shape}"
        )
    if not np.all(np.isfinite(grads)):
        bad = int(np.flatnonzero(~np.isfinite(grads))[0])
        raise TrainingAbortError(
            f"non-finite gradient component at index {bad} "
            f"(step {state.step_count + 1})"
        )
    t = state.step_count + 1
    m = ADAM_BETA1 * state.first_moment + (1.0 - ADAM_BETA1) * grads
    v = ADAM_BETA2 * state.second_moment + (1.0 - ADAM_BETA2) * grads**2
    m_hat = m / (1.0 - ADAM_BETA1**t)
    v_hat = v / (1.0 - ADAM_BETA2**t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return new_params, OptimizerState(m, v, t)


def pack_params(model: FbmModel) -> np.ndarray:
    return np.concatenate([model.magic.alpha, model.ansatz.angles.ravel()])


def unpack_params(model: FbmModel, params: np.ndarray) -> FbmModel:
    n_regs = model.N
    alpha = params[:n_regs].copy()
    theta = params[n_regs:].reshape(model.ansatz.angles.shape).copy()
    return replace(
        model,
        magic=MagicAngles(n_regs, alpha),
        ansatz=FloAnsatz(model.d, model.ansatz.layers, theta),
    )


def train(model: FbmModel, data: BitDataset, config: TrainConfig, *,
          checkpoint_path=None, start_epoch: int = 0,
          ) -> tuple[FbmModel, TrainHistory]:
    """Run the epoch loop; returns the trained model and its history.

    Epoch numbering starts at `start_epoch` so resumed runs keep a single
    consistent sequence; the per-epoch string stream is derived from
    (seed, epoch), which makes a resumed run sample exactly what an
    uninterrupted one would have. Each history row reports the loss at the
    epoch's *updated* parameters on the epoch's strings, so re-scoring the
    saved checkpoint reproduces the last row; grad_norm is the gradient
    that produced the update. On numerical failure a TrainingAbortError
    carrying the completed part of the history is raised; any checkpoint
    already on disk stays valid because writes are atomic.
    """
    if data.n != model.n:
        raise InvalidInputError(
            f"dataset has {data.n} variables but the model measures {model.n}"
        )
    params = pack_params(model)
    state = OptimizerState.fresh(params.size)
    history = TrainHistory()
    current = model
    for epoch in range(start_epoch, start_epoch + config.epochs):
        t0 = time.perf_counter()
        stream = epoch if config.resample_strings else 0
        rng = np.random.default_rng((config.seed, 2, stream))
        groups = [strings_for_spec(spec, current.n, rng) for spec in config.kernels]
        try:
            _, grad = loss_and_gradient(current, data, groups, config.kernels)
            params, state = adam_step(params, grad, state, config.learning_rate)
            current = unpack_params(current, params)
            value = evaluate_loss(current, data, groups, config.kernels)
        except NumericalConsistencyError as exc:
            raise TrainingAbortError(
                f"epoch {epoch}: {exc}", history=history
            ) from exc
        except TrainingAbortError as exc:
            raise TrainingAbortError(
                f"epoch {epoch}: {exc}", history=history
            ) from exc
        history.records.append(EpochRecord(
            epoch, value, float(np.linalg.norm(grad)), time.perf_counter() - t0
        ))
        done = epoch - start_epoch + 1
        if (checkpoint_path is not None and config.checkpoint_every
                and done % config.checkpoint_every == 0):
            save_model(current, checkpoint_path, seed=config.seed, epoch=epoch + 1)
    if checkpoint_path is not None:
        save_model(current, checkpoint_path, seed=config.seed,
                   epoch=start_epoch + config.epochs)
    return current, history


def compile_layers(model: FbmModel) -> FbmModel:
    """Collapse a multi-layer ansatz into one layer with the same transform.

    The layer product is a single special orthogonal matrix, so it can always
    be re-expressed as one brickwork of Givens angles; the decomposition
    verifies its own reconstruction, making the returned model's statistics
    on measured modes identical to the input's up to roundoff.
    """
    total = build_orthogonal(model.ansatz)
    flat = brickwork_angles(total.mat)
    return replace(model, ansatz=FloAnsatz(model.d, 1, flat[None, :].copy()))
