"""Supervised and consistency losses with class-frequency reweighting.

Every loss returns (scalar value, gradient with respect to the student's
pre-softmax logits), so trainers chain straight into the network's backward
pass.  Probabilities passed in must be valid softmax rows; zero entries are
floored at PROB_FLOOR inside any logarithm and flagged through warnings.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12

REWEIGHT_METHODS = ("ce", "in", "focal", "cb")
SCL_SHAPES = ("exponential", "linear")


@dataclass(frozen=True)
class ReweightSpec:
    """Choice of supervised reweighting: plain CE, inverse frequency (in),
    focal modulation, or effective-number (cb) weighting."""

    method: str = "ce"
    focal_gamma: float = 2.0
    cb_beta: float = 0.999

    def __post_init__(self) -> None:
        if self.method not in REWEIGHT_METHODS:
            raise ValueError(f"method must be one of {REWEIGHT_METHODS}, got {self.method!r}")
        if self.focal_gamma < 0.0:
            raise ValueError("focal_gamma must be nonnegative")
        if not 0.0 <= self.cb_beta < 1.0:
            raise ValueError("cb_beta must lie in [0,1)")


@dataclass(frozen=True)
class SclShape:
    """Frequency-to-suppression map for consistency terms.

    exponential: beta ** (1 - n_c / n_max); linear: n_c / n_max.  Both equal 1
    on the most frequent class and shrink toward rarer predicted classes.
    """

    kind: str = "exponential"
    beta: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in SCL_SHAPES:
            raise ValueError(f"kind must be one of {SCL_SHAPES}, got {self.kind!r}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0,1]")


def class_weights(spec: ReweightSpec, counts: np.ndarray) -> np.ndarray:
    """Per-class loss weights, normalized to sum to the number of classes.

    ce and focal carry uniform weights; in weights classes by inverse
    frequency; cb by inverse effective number (1 - beta^n) / (1 - beta).
    """
    counts = np.asarray(counts, dtype=np.int64)
    if counts.ndim != 1 or counts.size < 2:
        raise ValueError("counts must be a vector with one entry per class (>= 2 classes)")
    if np.any(counts < 1):
        raise ValueError("counts must be positive")
    n_classes = counts.size
    if spec.method in ("ce", "focal"):
        return np.ones(n_classes, dtype=np.float64)
    if np.all(counts == counts[0]):
        # Balanced counts give uniform weights by definition; returning ones
        # directly keeps the balanced case bit-identical to plain CE.
        return np.ones(n_classes, dtype=np.float64)
    if spec.method == "in":
        raw = 1.0 / counts.astype(np.float64)
    else:  # cb
        beta = spec.cb_beta
        effective = (1.0 - np.power(beta, counts.astype(np.float64))) / (1.0 - beta)
        raw = 1.0 / effective
    return raw * (n_classes / raw.sum())


def _grad_through_softmax(d_probs: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Chain a gradient in probability space back to the logits."""
    inner = (d_probs * probs).sum(axis=1, keepdims=True)
    return probs * (d_probs - inner)


def _floor_probs(values: np.ndarray, context: str) -> np.ndarray:
    if np.any(values < PROB_FLOOR):
        warnings.warn(f"{context}: probabilities below {PROB_FLOOR} clamped before log",
                      RuntimeWarning, stacklevel=3)
        return np.maximum(values, PROB_FLOOR)
    return values


def supervised_loss(probs: np.ndarray, labels: np.ndarray, spec: ReweightSpec,
                    counts: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean reweighted classification loss over a labeled batch.

    probs rows must be softmax outputs.  The returned gradient is taken with
    respect to the pre-softmax logits and already includes the 1/batch factor.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ValueError("probs must be (batch, classes) with one label per row")
    batch = probs.shape[0]
    if batch == 0:
        raise ValueError("batch must be nonempty")
    if np.any(labels < 0) or np.any(labels >= probs.shape[1]):
        raise ValueError("labels must index columns of probs")
    weights = class_weights(spec, counts)
    sample_w = weights[labels]
    rows = np.arange(batch)
    p_true = probs[rows, labels]
    p_safe = _floor_probs(p_true, "supervised_loss")

    if spec.method == "focal":
        gamma = spec.focal_gamma
        one_minus = 1.0 - p_true
        log_p = np.log(p_safe)
        loss_terms = np.power(one_minus, gamma) * (-log_p)
        # d loss / d p_true; the limit at p_true -> 1 is 0 for gamma > 0, and
        # the masked form avoids 0 * inf there.
        d_p = np.zeros(batch, dtype=np.float64)
        interior = one_minus > 0.0
        om = one_minus[interior]
        lp = log_p[interior]
        pt = p_safe[interior]
        if gamma == 0.0:
            d_p[interior] = -1.0 / pt
        else:
            d_p[interior] = gamma * np.power(om, gamma - 1.0) * lp - np.power(om, gamma) / pt
        d_probs = np.zeros_like(probs)
        d_probs[rows, labels] = sample_w * d_p / batch
        d_logits = _grad_through_softmax(d_probs, probs)
    else:
        loss_terms = -np.log(p_safe)
        onehot = np.zeros_like(probs)
        onehot[rows, labels] = 1.0
        d_logits = (probs - onehot) * (sample_w / batch)[:, None]

    loss = float(np.mean(sample_w * loss_terms))
    return loss, d_logits


def _weighted_consistency(student_probs: np.ndarray, target_probs: np.ndarray,
                          sample_weights: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean of w_i * 0.5 * ||p_i - q_i||^2 with gradient through the student only."""
    student_probs = np.asarray(student_probs, dtype=np.float64)
    target_probs = np.asarray(target_probs, dtype=np.float64)
    if student_probs.shape != target_probs.shape or student_probs.ndim != 2:
        raise ValueError("student and target probabilities must share a (batch, classes) shape")
    batch = student_probs.shape[0]
    if batch == 0:
        raise ValueError("batch must be nonempty")
    diff = student_probs - target_probs
    per_sample = 0.5 * np.sum(diff * diff, axis=1)
    loss = float(np.mean(sample_weights * per_sample))
    d_probs = diff * (sample_weights / batch)[:, None]
    return loss, _grad_through_softmax(d_probs, student_probs)


def consistency_l2(student_probs: np.ndarray, target_probs: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared-L2 distance between student and target probability rows.

    The target branch is treated as a constant: the gradient (with respect to
    the student's logits) flows through the student probabilities only.
    """
    batch = np.asarray(student_probs).shape[0]
    return _weighted_consistency(student_probs, target_probs, np.ones(batch, dtype=np.float64))


def scl_weight(counts: np.ndarray, predicted_class: int, shape: SclShape) -> float:
    """Suppression factor for one sample given its predicted class.

    Uses the labeled per-class counts: n_c of the predicted class against the
    largest class size n_max.  Constant with respect to the model parameters.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if np.any(counts < 1):
        raise ValueError("counts must be positive")
    if not 0 <= predicted_class < counts.size:
        raise ValueError("predicted_class out of range")
    n_c = float(counts[predicted_class])
    n_max = float(counts.max())
    if shape.kind == "linear":
        return n_c / n_max
    return float(shape.beta ** (1.0 - n_c / n_max))


def scl_weights(counts: np.ndarray, predictions: np.ndarray, shape: SclShape) -> np.ndarray:
    """Vectorized scl_weight over a batch of predicted classes."""
    counts = np.asarray(counts, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if np.any(counts < 1):
        raise ValueError("counts must be positive")
    if predictions.size and (predictions.min() < 0 or predictions.max() >= counts.size):
        raise ValueError("predictions out of range")
    n_c = counts.astype(np.float64)[predictions]
    n_max = float(counts.max())
    if shape.kind == "linear":
        return n_c / n_max
    return np.power(shape.beta, 1.0 - n_c / n_max)


def scl_consistency(student_probs: np.ndarray, target_probs: np.ndarray,
                    predictions: np.ndarray, counts: np.ndarray,
                    shape: SclShape) -> tuple[float, np.ndarray]:
    """Consistency loss with per-sample suppression by predicted-class frequency.

    predictions are the argmax classes the caller computed (no gradient flows
    through them).  With balanced counts every suppression factor is exactly
    1 and the result is bit-identical to consistency_l2.
    """
    weights = scl_weights(counts, predictions, shape)
    if weights.shape != (np.asarray(student_probs).shape[0],):
        raise ValueError("predictions must align with the batch")
    return _weighted_consistency(student_probs, target_probs, weights)
