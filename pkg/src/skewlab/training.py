"""Training loops for the five learning regimes on 2-D splits.

Regimes: plain supervised; consistency against a same-parameter branch with
an independent input perturbation ("pi-model"); consistency against an
EMA-parameter branch ("mean-teacher"); confidence-thresholded self-labeling
("pseudo-label"); and mean-teacher with frequency-suppressed consistency
("mt-scl").

RNG discipline: three streams derived from one seed cover init, batch
sampling, and input perturbation.  Batch sampling always draws labeled and
unlabeled indices in the same order regardless of the regime, and the
perturbation stream is consumed only when the consistency term actually
runs, so regimes whose extra terms vanish reproduce the supervised
trajectory bit for bit.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from .datasets import CisslSplit, Dataset2D
from .ioutil import fmt, read_csv, write_csv
from .losses import (
    PROB_FLOOR,
    ReweightSpec,
    SclShape,
    consistency_l2,
    scl_consistency,
    supervised_loss,
)
from .mlp import MlpParams, backward, forward, init_params, param_add, param_scale, softmax
from .optim import Schedule, ema_update, init_ema, init_sgd_state, lr_at, rampup_weight, sgd_step

ALGORITHM_KINDS = ("supervised", "pi-model", "mean-teacher", "pseudo-label", "mt-scl")
CONSISTENCY_KINDS = ("pi-model", "mean-teacher", "mt-scl")
EMA_KINDS = ("mean-teacher", "mt-scl")
SCL_PRED_SOURCES = ("student", "target")


class TrainingDiverged(RuntimeError):
    """Raised when a loss goes non-finite; carries a diagnostic snapshot."""

    def __init__(self, iteration: int, sup_loss: float, con_loss: float, param_scale_: float):
        self.iteration = iteration
        self.sup_loss = sup_loss
        self.con_loss = con_loss
        self.param_scale = param_scale_
        super().__init__(
            f"non-finite loss at iteration {iteration}: supervised {sup_loss}, "
            f"consistency {con_loss}, max |param| {param_scale_:g}")


@dataclass(frozen=True)
class AlgorithmSpec:
    """Which regime to run plus its regime-specific knobs."""

    kind: str
    reweight: ReweightSpec = ReweightSpec()
    ema_gamma: float = 0.95
    pl_threshold: float = 0.95
    scl: SclShape = SclShape()
    scl_pred_source: str = "student"

    def __post_init__(self) -> None:
        if self.kind not in ALGORITHM_KINDS:
            raise ValueError(f"kind must be one of {ALGORITHM_KINDS}, got {self.kind!r}")
        if not 0.0 < self.ema_gamma <= 1.0:
            raise ValueError("ema_gamma must lie in (0,1]")
        if not 0.0 < self.pl_threshold <= 1.0:
            raise ValueError("pl_threshold must lie in (0,1]")
        if self.scl_pred_source not in SCL_PRED_SOURCES:
            raise ValueError(f"scl_pred_source must be one of {SCL_PRED_SOURCES}")


@dataclass(frozen=True)
class TrainConfig:
    schedule: Schedule
    labeled_batch: int = 32
    unlabeled_batch: int = 32
    perturb_std: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.0
    hidden_width: int = 64
    hidden_layers: int = 2
    eval_every: int = 500
    sample_with_replacement: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.labeled_batch < 1 or self.unlabeled_batch < 1:
            raise ValueError("batch sizes must be positive")
        if self.perturb_std < 0.0:
            raise ValueError("perturb_std must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0,1)")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be nonnegative")
        if self.eval_every < 1:
            raise ValueError("eval_every must be positive")


@dataclass(frozen=True, eq=False)
class HistoryPoint:
    """Validation snapshot after `iteration` completed steps."""

    iteration: int
    lr: float
    w: float
    sup_loss: float
    con_loss: float
    student_errors: np.ndarray
    ema_errors: np.ndarray | None


@dataclass(frozen=True, eq=False)
class RunResult:
    params: MlpParams
    ema_params: MlpParams | None
    history: tuple[HistoryPoint, ...]
    wall_seconds: float


def sample_batch(split: CisslSplit, config: TrainConfig,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw one labeled batch (with labels) and one unlabeled batch (points only).

    Uniform over each partition, independently; with replacement unless the
    config turns it off.  The labeled draw always precedes the unlabeled one
    so every regime consumes the stream identically.
    """
    n_lab = len(split.labeled)
    rows_lab = rng.choice(n_lab, size=config.labeled_batch,
                          replace=config.sample_with_replacement)
    unlabeled = split.unlabeled_points()
    if unlabeled.shape[0] == 0:
        rows_unl = np.empty(0, dtype=np.int64)
    else:
        rows_unl = rng.choice(unlabeled.shape[0], size=config.unlabeled_batch,
                              replace=config.sample_with_replacement)
    return (split.labeled.points[rows_lab], split.labeled.labels[rows_lab],
            unlabeled[rows_unl])


def perturb(x: np.ndarray, noise_std: float, rng: np.random.Generator) -> np.ndarray:
    """Additive isotropic Gaussian input noise; identity when noise_std == 0."""
    if noise_std < 0.0:
        raise ValueError("noise_std must be nonnegative")
    if noise_std == 0.0:
        return x
    return x + rng.normal(0.0, noise_std, x.shape)


def evaluate(params: MlpParams, dataset: Dataset2D) -> np.ndarray:
    """Per-class error rates under argmax prediction; NaN for absent classes."""
    logits, _ = forward(params, dataset.points)
    predicted = logits.argmax(axis=1)
    errors = np.full(dataset.n_classes, np.nan, dtype=np.float64)
    for cls in range(dataset.n_classes):
        mask = dataset.labels == cls
        if mask.any():
            errors[cls] = float(np.mean(predicted[mask] != cls))
    return errors


def _pseudo_label_loss(probs: np.ndarray, threshold: float) -> tuple[float, np.ndarray | None]:
    """CE of confident samples against their own argmax, averaged over the
    whole batch; samples below the confidence threshold contribute nothing."""
    batch = probs.shape[0]
    confidence = probs.max(axis=1)
    mask = confidence >= threshold
    if not mask.any():
        return 0.0, None
    hard = probs.argmax(axis=1)
    safe = np.maximum(confidence[mask], PROB_FLOOR)
    loss = float(np.sum(-np.log(safe)) / batch)
    d_logits = np.zeros_like(probs)
    d_logits[mask] = probs[mask]
    d_logits[mask, hard[mask]] -= 1.0
    d_logits /= batch
    return loss, d_logits


def _max_abs_param(params: MlpParams) -> float:
    return max(float(np.max(np.abs(a))) for a in params.weights + params.biases)


def train(split: CisslSplit, algo: AlgorithmSpec, config: TrainConfig, *,
          step_callback=None) -> RunResult:
    """Run one training session and return final parameters plus history.

    Deterministic in (split, algo, config): all randomness flows from
    config.seed through fixed-order stream derivation.
    """
    started = time.perf_counter()
    sched = config.schedule
    n_classes = split.labeled.n_classes
    if not config.sample_with_replacement:
        if config.labeled_batch > len(split.labeled):
            raise ValueError("labeled_batch exceeds the labeled set without replacement")
        if len(split.unlabeled) and config.unlabeled_batch > len(split.unlabeled):
            raise ValueError("unlabeled_batch exceeds the unlabeled set without replacement")

    derived = np.random.SeedSequence(config.seed).generate_state(3)
    params = init_params(config.hidden_width, n_classes, int(derived[0]),
                         hidden_layers=config.hidden_layers)
    batch_rng = np.random.default_rng(int(derived[1]))
    noise_rng = np.random.default_rng(int(derived[2]))
    opt = init_sgd_state(params, sched.base_lr, config.momentum)
    ema = init_ema(params, algo.ema_gamma) if algo.kind in EMA_KINDS else None
    counts = split.labeled_counts

    history: list[HistoryPoint] = []
    for t in range(sched.total_iters):
        lr = lr_at(t, sched)
        w = rampup_weight(t, sched)
        x_lab, y_lab, x_unl = sample_batch(split, config, batch_rng)

        logits, trace = forward(params, x_lab)
        sup_loss, d_sup = supervised_loss(softmax(logits), y_lab, algo.reweight, counts)
        grad = backward(trace, d_sup)

        con_loss = 0.0
        if algo.kind in CONSISTENCY_KINDS and w > 0.0 and x_unl.shape[0] > 0:
            x_student = perturb(x_unl, config.perturb_std, noise_rng)
            x_target = perturb(x_unl, config.perturb_std, noise_rng)
            s_logits, s_trace = forward(params, x_student)
            s_probs = softmax(s_logits)
            target_params = ema.target if ema is not None else params
            t_logits, _ = forward(target_params, x_target)
            t_probs = softmax(t_logits)
            if algo.kind == "mt-scl":
                source = t_probs if algo.scl_pred_source == "target" else s_probs
                predictions = source.argmax(axis=1)
                con_loss, d_con = scl_consistency(s_probs, t_probs, predictions,
                                                  counts, algo.scl)
            else:
                con_loss, d_con = consistency_l2(s_probs, t_probs)
            grad = param_add(grad, param_scale(backward(s_trace, d_con), w))
        elif algo.kind == "pseudo-label" and w > 0.0 and x_unl.shape[0] > 0:
            u_logits, u_trace = forward(params, x_unl)
            con_loss, d_con = _pseudo_label_loss(softmax(u_logits), algo.pl_threshold)
            if d_con is not None:
                grad = param_add(grad, param_scale(backward(u_trace, d_con), w))

        if config.weight_decay > 0.0:
            grad = param_add(grad, param_scale(params, config.weight_decay))
        if not (math.isfinite(sup_loss) and math.isfinite(con_loss)):
            raise TrainingDiverged(t, sup_loss, con_loss, _max_abs_param(params))

        opt = replace(opt, lr=lr)
        params, opt = sgd_step(params, grad, opt)
        if ema is not None:
            ema = ema_update(ema, params)
        if step_callback is not None:
            step_callback(t, params, ema.target if ema is not None else None)

        if (t + 1) % config.eval_every == 0 or t + 1 == sched.total_iters:
            student_errors = evaluate(params, split.validation)
            ema_errors = evaluate(ema.target, split.validation) if ema is not None else None
            history.append(HistoryPoint(t + 1, lr, w, sup_loss, con_loss,
                                        student_errors, ema_errors))

    return RunResult(params=params,
                     ema_params=ema.target if ema is not None else None,
                     history=tuple(history),
                     wall_seconds=time.perf_counter() - started)


def history_header(n_classes: int, with_ema: bool) -> list[str]:
    header = ["iteration", "lr", "w", "sup_loss", "con_loss"]
    header += [f"student_err_{c}" for c in range(n_classes)]
    if with_ema:
        header += [f"ema_err_{c}" for c in range(n_classes)]
    return header


def write_history_csv(result: RunResult, path: str) -> None:
    """Serialize the history with full float precision; no timestamps, so the
    file is byte-identical across reruns of the same configuration."""
    if not result.history:
        raise ValueError("history is empty")
    n_classes = result.history[0].student_errors.size
    with_ema = result.history[0].ema_errors is not None
    rows = []
    for point in result.history:
        row = [str(point.iteration), fmt(point.lr), fmt(point.w),
               fmt(point.sup_loss), fmt(point.con_loss)]
        row += [fmt(e) for e in point.student_errors]
        if with_ema:
            assert point.ema_errors is not None
            row += [fmt(e) for e in point.ema_errors]
        rows.append(row)
    write_csv(path, history_header(n_classes, with_ema), rows)


def read_history_csv(path: str) -> tuple[list[str], np.ndarray]:
    """Parse a history file back into (header, float matrix)."""
    header, rows = read_csv(path)
    return header, np.array([[float(cell) for cell in row] for row in rows], dtype=np.float64)
