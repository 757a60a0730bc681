"""Confusion counts, derived metrics, ROC-AUC, and cross-validation."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError
from .images import LabeledDataset, LabeledSample
from .network import NetworkSpec
from .training import FoldResult, RunHistory, TrainConfig, train_fold


@dataclass
class ConfusionMatrix:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.tn + other.tn,
                               self.fp + other.fp, self.fn + other.fn)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


@dataclass
class MetricsReport:
    """Accuracy, sensitivity (recall), precision (PPV), F1, specificity, and
    optionally AUC and loss. Metrics with a zero denominator are reported as
    0.0 and named in `degenerate`."""

    accuracy: float
    sensitivity: float
    precision: float
    f1: float
    specificity: float
    auc: float | None = None
    loss: float | None = None
    degenerate: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "sensitivity": self.sensitivity,
            "precision": self.precision,
            "f1": self.f1,
            "specificity": self.specificity,
            "auc": self.auc,
            "loss": self.loss,
            "degenerate": list(self.degenerate),
        }


def confusion(predicted, actual) -> ConfusionMatrix:
    """Tally counts with the positive class = covid (label 1)."""
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    if predicted.shape != actual.shape or predicted.ndim != 1:
        raise ShapeError(
            f"predicted {predicted.shape} and actual {actual.shape} must be "
            f"equal-length 1-d arrays")
    if predicted.size == 0:
        raise ShapeError("confusion requires at least one sample")
    pos = actual == 1
    pred_pos = predicted == 1
    return ConfusionMatrix(
        tp=int(np.sum(pred_pos & pos)),
        tn=int(np.sum(~pred_pos & ~pos)),
        fp=int(np.sum(pred_pos & ~pos)),
        fn=int(np.sum(~pred_pos & pos)),
    )


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Derive the five count-based metrics from a confusion matrix."""
    if cm.total < 1:
        raise ValueError("metrics require at least one counted sample")
    degenerate = []

    def ratio(name: str, num: int, den: int) -> float:
        if den == 0:
            degenerate.append(name)
            return 0.0
        return num / den

    report = MetricsReport(
        accuracy=ratio("accuracy", cm.tp + cm.tn, cm.total),
        sensitivity=ratio("sensitivity", cm.tp, cm.tp + cm.fn),
        precision=ratio("precision", cm.tp, cm.tp + cm.fp),
        f1=ratio("f1", 2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn),
        specificity=ratio("specificity", cm.tn, cm.tn + cm.fp),
    )
    report.degenerate = tuple(degenerate)
    return report


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve via the trapezoidal rule over the tie-aware
    curve; equals the Mann-Whitney statistic with ties counted as 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ShapeError("scores and labels must be equal-length 1-d arrays")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise DataError("ROC-AUC needs at least one positive and one negative")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    area = 0.0
    tp = fp = 0
    i = 0
    n = len(s)
    while i < n:
        j = i
        while j < n and s[j] == s[i]:
            j += 1
        d_tp = int(np.sum(y[i:j] == 1))
        d_fp = (j - i) - d_tp
        # trapezoid across the tie group: all its points move together
        area += d_fp * (tp + 0.5 * d_tp)
        tp += d_tp
        fp += d_fp
        i = j
    return area / (n_pos * n_neg)


def stratified_kfold(labels, k: int, seed: int) -> list[np.ndarray]:
    """Partition indices into k folds whose per-class counts differ by at
    most 1. Deterministic in (labels, k, seed)."""
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    rng = np.random.Generator(np.random.PCG64(seed))
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < k:
            raise DataError(
                f"class {cls} has {len(idx)} samples, fewer than k={k}")
        idx = idx[rng.permutation(len(idx))]
        for f in range(k):
            folds[f].extend(idx[f::k])
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def plain_kfold(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Unstratified k-fold partition of range(n)."""
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if n < k:
        raise DataError(f"cannot split {n} samples into {k} folds")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(n)
    return [np.array(sorted(order[f::k]), dtype=np.int64) for f in range(k)]


@dataclass
class CvResult:
    fold_confusions: list[ConfusionMatrix]
    fold_metrics: list[MetricsReport]
    fold_histories: list[RunHistory]
    fold_params: list
    pooled_confusion: ConfusionMatrix
    pooled_metrics: MetricsReport
    config: TrainConfig
    spec: NetworkSpec
    seed: int
    fold_scores: list[np.ndarray] = field(default_factory=list)
    fold_labels: list[np.ndarray] = field(default_factory=list)
    fold_predictions: list[np.ndarray] = field(default_factory=list)


def _fold_splits(dataset: LabeledDataset, config: TrainConfig,
                 stratified: bool) -> list[tuple[list[LabeledSample],
                                                 list[LabeledSample]]]:
    """Build (train_samples, test_samples) per fold for the configured mode."""
    samples = dataset.samples
    if config.leakage_mode == "paper-faithful":
        labels = np.array([s.label for s in samples])
        folds = (stratified_kfold(labels, config.folds, config.seed)
                 if stratified else
                 plain_kfold(len(samples), config.folds, config.seed))
        splits = []
        for fold in folds:
            in_fold = np.zeros(len(samples), dtype=bool)
            in_fold[fold] = True
            splits.append((
                [s for i, s in enumerate(samples) if not in_fold[i]],
                [s for i, s in enumerate(samples) if in_fold[i]],
            ))
        return splits

    # leak-free: folds over originals; augmented variants follow their source
    # into the training side only, so no test source ever leaks into training.
    original_idx = [i for i, s in enumerate(samples) if s.lineage == "original"]
    if not original_idx:
        raise DataError("dataset has no original samples to fold over")
    labels = np.array([samples[i].label for i in original_idx])
    folds = (stratified_kfold(labels, config.folds, config.seed)
             if stratified else
             plain_kfold(len(original_idx), config.folds, config.seed))
    splits = []
    for fold in folds:
        test_sources = {samples[original_idx[j]].source_id for j in fold}
        train = [s for s in samples if s.source_id not in test_sources]
        test = [samples[original_idx[j]] for j in fold]
        splits.append((train, test))
    return splits


def cross_validate(spec: NetworkSpec, config: TrainConfig,
                   dataset: LabeledDataset, stratified: bool = True,
                   threads: int = 1) -> CvResult:
    """Train and evaluate one model per fold; aggregate per-fold and pooled
    metrics. Per-fold RNG streams derive from config.seed + fold index, so the
    parallel path (threads > 1) reproduces the sequential one bit-exactly."""
    if config.folds < 2:
        raise ValueError(f"folds must be >= 2, got {config.folds}")
    labels = dataset.labels()
    if len(np.unique(labels)) < 2:
        raise DataError("cross-validation requires both classes present")
    splits = _fold_splits(dataset, config, stratified)

    def run(fold_index: int) -> FoldResult:
        train_s, test_s = splits[fold_index]
        return train_fold(spec, config, train_s, test_s,
                          seed=config.seed + fold_index)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(config.folds)))
    else:
        results = [run(i) for i in range(config.folds)]

    fold_cms, fold_reports, fold_hist, fold_params = [], [], [], []
    fold_scores, fold_labels, fold_preds = [], [], []
    for res in results:
        cm = confusion(res.predictions, res.test_labels)
        report = metrics(cm)
        both = len(np.unique(res.test_labels)) == 2
        report.auc = roc_auc(res.scores, res.test_labels) if both else None
        report.loss = res.test_loss
        fold_cms.append(cm)
        fold_reports.append(report)
        fold_hist.append(res.history)
        fold_params.append(res.params)
        fold_scores.append(res.scores)
        fold_labels.append(res.test_labels)
        fold_preds.append(res.predictions)

    pooled_cm = ConfusionMatrix()
    for cm in fold_cms:
        pooled_cm = pooled_cm + cm
    pooled = metrics(pooled_cm)
    all_scores = np.concatenate(fold_scores)
    all_labels = np.concatenate(fold_labels)
    pooled.auc = roc_auc(all_scores, all_labels)
    total = sum(len(lbl) for lbl in fold_labels)
    pooled.loss = float(sum(r.test_loss * len(lbl) for r, lbl in
                            zip(results, fold_labels)) / total)

    return CvResult(
        fold_confusions=fold_cms,
        fold_metrics=fold_reports,
        fold_histories=fold_hist,
        fold_params=fold_params,
        pooled_confusion=pooled_cm,
        pooled_metrics=pooled,
        config=config,
        spec=spec,
        seed=config.seed,
        fold_scores=fold_scores,
        fold_labels=fold_labels,
        fold_predictions=fold_preds,
    )
