"""Losses, the Adam optimizer, and the per-fold training loop."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, DataError, ShapeError
from .images import LabeledSample, normalize, sobel
from .network import (
    HEADS,
    NetworkSpec,
    ParamSet,
    backward,
    forward,
    init_params,
    zeros_like_params,
    zip_map,
)

LEAKAGE_MODES = ("paper-faithful", "leak-free")

BCE_CLAMP = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    """All run hyperparameters. The defaults are the reference configuration."""

    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-7
    validation_fraction: float = 0.2
    head: str = "sigmoid"
    sobel: bool = False
    seed: int = 0
    folds: int = 10
    leakage_mode: str = "leak-free"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError(
                f"validation_fraction must be in (0, 1), got {self.validation_fraction}")
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        if self.leakage_mode not in LEAKAGE_MODES:
            raise ValueError(
                f"leakage_mode must be one of {LEAKAGE_MODES}, got {self.leakage_mode!r}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_epsilon": self.adam_epsilon,
            "validation_fraction": self.validation_fraction,
            "head": self.head,
            "sobel": self.sobel,
            "seed": self.seed,
            "folds": self.folds,
            "leakage_mode": self.leakage_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass
class AdamState:
    """First/second moment estimates per parameter tensor, plus the timestep."""

    m: ParamSet
    v: ParamSet
    t: int = 0

    @classmethod
    def fresh(cls, params: ParamSet) -> "AdamState":
        return cls(m=zeros_like_params(params), v=zeros_like_params(params), t=0)


@dataclass
class RunHistory:
    """Per-epoch loss/accuracy series for one training run."""

    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.train_loss)

    def append(self, train_loss, train_acc, val_loss, val_acc) -> None:
        self.train_loss.append(float(train_loss))
        self.train_acc.append(float(train_acc))
        self.val_loss.append(float(val_loss))
        self.val_acc.append(float(val_acc))

    def rows(self):
        return zip(self.train_loss, self.train_acc, self.val_loss, self.val_acc)


def bce_loss(predictions: np.ndarray, targets: np.ndarray
             ) -> tuple[float, np.ndarray]:
    """Binary cross-entropy over all B*K prediction entries.

    Predictions are clamped to [1e-7, 1 - 1e-7] before the logs; the returned
    gradient is the exact derivative of the clamped loss with respect to the
    predictions (zero where the clamp is active).
    """
    if predictions.shape != targets.shape:
        raise ShapeError(
            f"predictions {predictions.shape} and targets {targets.shape} differ")
    p = np.clip(predictions, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = -np.mean(targets * np.log(p) + (1.0 - targets) * np.log1p(-p))
    grad = -(targets / p - (1.0 - targets) / (1.0 - p)) / predictions.size
    grad = grad * ((predictions > BCE_CLAMP) & (predictions < 1.0 - BCE_CLAMP))
    return float(loss), grad.astype(predictions.dtype, copy=False)


def hinge_loss(scores: np.ndarray, targets: np.ndarray
               ) -> tuple[float, np.ndarray]:
    """Mean hinge loss max(0, 1 - t*s) over all B*K entries, targets in {-1, +1}
    with exactly one +1 per row. Subgradient is 0 at the kink."""
    if scores.shape != targets.shape:
        raise ShapeError(f"scores {scores.shape} and targets {targets.shape} differ")
    if not np.all(np.abs(targets) == 1):
        raise ValueError("hinge targets must contain only -1/+1")
    if not np.all((targets == 1).sum(axis=-1) == 1):
        raise ValueError("hinge targets must have exactly one +1 per row")
    margins = 1.0 - targets * scores
    active = margins > 0
    loss = np.mean(np.where(active, margins, 0.0))
    grad = np.where(active, -targets, 0.0) / scores.size
    return float(loss), grad.astype(scores.dtype, copy=False)


def one_hot(labels: np.ndarray, classes: int = 2) -> np.ndarray:
    out = np.zeros((len(labels), classes), dtype=np.float32)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def adam_step(params: ParamSet, grads: ParamSet, state: AdamState,
              config: TrainConfig) -> tuple[ParamSet, AdamState]:
    """One Adam update; pure function of (params, grads, state, config)."""
    b1, b2, eps, lr = (config.adam_beta1, config.adam_beta2,
                       config.adam_epsilon, config.learning_rate)
    t = state.t + 1
    new_m = zip_map(lambda m, g: b1 * m + (1.0 - b1) * g, state.m, grads)
    new_v = zip_map(lambda v, g: b2 * v + (1.0 - b2) * g * g, state.v, grads)
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t

    def update(p, m, v):
        return (p - lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)

    new_params = zip_map(update, params, new_m, new_v)
    return new_params, AdamState(m=new_m, v=new_v, t=t)


def iter_minibatches(n: int, batch_size: int, rng: np.random.Generator):
    """Yield shuffled index batches covering every sample exactly once; the
    final partial batch is kept."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def apply_arm(samples: list[LabeledSample], use_sobel: bool) -> np.ndarray:
    """Sobel-filter (when the arm asks for it) and normalize samples into a
    network-ready batch (N, 1, S, S)."""
    tensors = []
    for s in samples:
        img = sobel(s.image) if use_sobel else s.image
        tensors.append(normalize(img))
    return np.stack(tensors).astype(np.float32)


def stratified_split(labels: np.ndarray, fraction: float,
                     rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Split indices into (train, held_out) keeping per-class proportions.

    Each class keeps at least one training sample; classes with a single
    member contribute nothing to the held-out side.
    """
    train_idx, held_idx = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        n_held = min(len(idx) - 1, int(round(fraction * len(idx))))
        n_held = max(n_held, 0)
        held_idx.append(idx[:n_held])
        train_idx.append(idx[n_held:])
    train = np.sort(np.concatenate(train_idx))
    held = np.sort(np.concatenate(held_idx))
    return train, held


@dataclass
class FoldResult:
    params: ParamSet
    history: RunHistory
    predictions: np.ndarray   # predicted class per test sample
    scores: np.ndarray        # positive-class score per test sample
    test_labels: np.ndarray
    test_loss: float


def _loss_for_head(head: str, outputs: np.ndarray, targets_onehot: np.ndarray
                   ) -> tuple[float, np.ndarray]:
    if head == "sigmoid":
        return bce_loss(outputs, targets_onehot)
    return hinge_loss(outputs, 2.0 * targets_onehot - 1.0)


def _evaluate(spec: NetworkSpec, params: ParamSet, x: np.ndarray,
              labels: np.ndarray) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Inference-mode loss, accuracy, predictions, and positive-class scores."""
    outputs, _ = forward(spec, params, x, training=False)
    loss, _ = _loss_for_head(spec.head, outputs, one_hot(labels, spec.output_units))
    predictions = outputs.argmax(axis=1)
    accuracy = float(np.mean(predictions == labels))
    scores = outputs[:, 1].astype(np.float64)
    return loss, accuracy, predictions, scores


def train_fold(spec: NetworkSpec, config: TrainConfig,
               train_samples: list[LabeledSample],
               test_samples: list[LabeledSample],
               seed: int | None = None) -> FoldResult:
    """Train one model and evaluate it on the held-out test samples.

    A stratified validation split is carved out of train_samples; the chosen
    preprocessing arm (Sobel on/off) and normalization are applied to every
    split. Raises DivergenceError as soon as any loss turns non-finite.
    """
    if config.head != spec.head:
        raise ValueError(
            f"config head {config.head!r} disagrees with spec head {spec.head!r}")
    labels = np.array([s.label for s in train_samples], dtype=np.int64)
    if len(np.unique(labels)) < 2:
        raise DataError("training data contains a single class")
    seed = config.seed if seed is None else seed
    rng = np.random.Generator(np.random.PCG64(seed))

    train_idx, val_idx = stratified_split(labels, config.validation_fraction, rng)
    fit_samples = [train_samples[i] for i in train_idx]
    val_samples = [train_samples[i] for i in val_idx]
    if not val_samples:
        # degenerate micro-dataset: report validation metrics on the training set
        val_samples = fit_samples

    x_train = apply_arm(fit_samples, config.sobel)
    y_train = np.array([s.label for s in fit_samples], dtype=np.int64)
    x_val = apply_arm(val_samples, config.sobel)
    y_val = np.array([s.label for s in val_samples], dtype=np.int64)
    t_train = one_hot(y_train, spec.output_units)

    params = init_params(spec, seed)
    state = AdamState.fresh(params)
    history = RunHistory()

    for epoch in range(config.epochs):
        loss_sum = 0.0
        hits = 0
        for batch_idx in iter_minibatches(len(fit_samples), config.batch_size, rng):
            xb = x_train[batch_idx]
            tb = t_train[batch_idx]
            outputs, trace = forward(spec, params, xb, training=True, rng=rng)
            if not np.all(np.isfinite(outputs)):
                raise DivergenceError(
                    f"non-finite network outputs at epoch {epoch + 1}; aborting fold")
            loss, out_grad = _loss_for_head(spec.head, outputs, tb)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch + 1}; aborting fold")
            grads = backward(spec, params, trace, out_grad)
            params, state = adam_step(params, grads, state, config)
            loss_sum += loss * len(batch_idx)
            hits += int(np.sum(outputs.argmax(axis=1) == y_train[batch_idx]))
        train_loss = loss_sum / len(fit_samples)
        train_acc = hits / len(fit_samples)
        val_loss, val_acc, _, _ = _evaluate(spec, params, x_val, y_val)
        if not np.isfinite(val_loss):
            raise DivergenceError(
                f"non-finite validation loss at epoch {epoch + 1}; aborting fold")
        history.append(train_loss, train_acc, val_loss, val_acc)

    x_test = apply_arm(test_samples, config.sobel)
    y_test = np.array([s.label for s in test_samples], dtype=np.int64)
    test_loss, _, predictions, scores = _evaluate(spec, params, x_test, y_test)
    return FoldResult(params=params, history=history, predictions=predictions,
                      scores=scores, test_labels=y_test, test_loss=test_loss)
