"""Training losses and evaluation metrics."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import DimensionError, Tensor


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.8
    beta: float = 0.1
    gamma: float = 0.1
    tau: float = 0.1

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("loss weights must be non-negative")
        if not self.tau > 0:
            raise ValueError("temperature must be positive")


def _stack(vectors) -> Tensor:
    if isinstance(vectors, Tensor):
        return vectors
    return ad.concat(list(vectors), axis=0)


def info_nce(originals, complements, tau: float = 0.1, negatives=None) -> Tensor:
    """Summed InfoNCE with in-batch negatives and cosine similarity.

    Row i of ``originals`` is positive with row i of ``complements`` and
    negative with every other complement row. ``negatives`` replaces the
    complement rows in the denominator (the positive term still uses
    ``complements``); by default both are the same.
    """
    a = ad.l2_normalize_rows(_stack(originals))
    c = ad.l2_normalize_rows(_stack(complements))
    if a.shape != c.shape:
        raise DimensionError(f"info_nce: {a.shape} originals vs {c.shape} complements")
    if negatives is None:
        return info_nce_from_sims(ad.matmul(a, c.T), tau)
    n = ad.l2_normalize_rows(_stack(negatives))
    if n.shape[1] != a.shape[1]:
        raise DimensionError(f"info_nce: negatives width {n.shape[1]} != {a.shape[1]}")
    scale = 1.0 / tau
    logits = ad.matmul(a, n.T) * scale
    positive = ad.sum(ad.mul(a, c), axis=1) * scale
    return ad.sum(ad.logsumexp(logits, axis=1) - positive)


def info_nce_from_sims(sims, tau: float = 0.1) -> Tensor:
    """Summed InfoNCE from a B x B similarity matrix whose diagonal holds the positives."""
    logits = ad.as_tensor(sims) * (1.0 / tau)
    return ad.sum(ad.logsumexp(logits, axis=1) - ad.diagonal(logits))


def bce(p: Tensor, y) -> Tensor:
    """Summed binary cross-entropy on probabilities."""
    if np.size(y) != p.size:
        raise DimensionError(f"bce: {p.size} probabilities vs {np.size(y)} labels")
    y = np.asarray(y, dtype=np.float64).reshape(p.shape)
    return -ad.sum(y * ad.log(p) + (1.0 - y) * ad.log(1.0 - p))


def bce_with_logits(z: Tensor, y) -> Tensor:
    """bce(sigmoid(z), y) computed as softplus(z) - y z, finite for any z."""
    if np.size(y) != z.size:
        raise DimensionError(f"bce: {z.size} logits vs {np.size(y)} labels")
    y = np.asarray(y, dtype=np.float64).reshape(z.shape)
    return ad.sum(ad.softplus(z) - y * z)


def composite_loss(l_bin, l_c1, l_c2, cfg: LossConfig = LossConfig()):
    return cfg.alpha * l_bin + cfg.beta * l_c1 + cfg.gamma * l_c2


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


def update_confusion(cm: ConfusionMatrix, p: float, y: int, threshold: float = 0.5) -> ConfusionMatrix:
    """Count one prediction; ``p >= threshold`` is a positive prediction."""
    positive = p >= threshold
    if y:
        field = "tp" if positive else "fn"
    else:
        field = "fp" if positive else "tn"
    return dataclasses.replace(cm, **{field: getattr(cm, field) + 1})


def confusion_from(probs: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> ConfusionMatrix:
    probs = np.asarray(probs, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    pred = probs >= threshold
    return ConfusionMatrix(
        tp=int(np.sum(pred & labels)),
        fp=int(np.sum(pred & ~labels)),
        tn=int(np.sum(~pred & ~labels)),
        fn=int(np.sum(~pred & labels)),
    )


def metrics(cm: ConfusionMatrix) -> dict[str, float]:
    """Accuracy, precision, recall and F1; undefined ratios are reported as 0.

    F1 uses 2TP / (2TP + FP + FN), equal to 2PR / (P + R) but free of the
    rounding that the product of two quotients introduces.
    """
    if cm.total == 0:
        raise ValueError("metrics of an empty confusion matrix")
    acc = (cm.tp + cm.tn) / cm.total
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else 0.0
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else 0.0
    f1 = 2 * cm.tp / (2 * cm.tp + cm.fp + cm.fn) if cm.tp else 0.0
    return {"acc": acc, "precision": precision, "recall": recall, "f1": f1, "n": cm.total}


def format_metrics(m: dict) -> str:
    return (
        f'{{"acc": {m["acc"]:.4f}, "precision": {m["precision"]:.4f}, '
        f'"recall": {m["recall"]:.4f}, "f1": {m["f1"]:.4f}, "n": {int(m["n"])}}}'
    )
