"""Loss, optimizer, metrics, gradient checker and the epoch loop.

Everything runs in float64 and is deterministic given the seed: epoch
shuffles and dropout masks come from one Generator consumed in a fixed
order, and the last partial batch is kept so every sample is used.
Training-split metrics are accumulated from the training pass itself
(dropout active); validation metrics come from a dropout-free pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import model as model_mod
from .model import ModelConfig

_CLAMP = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    batch_size: int = 32
    learning_rate: float = 5e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    dropout_rate: float = 0.5

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        for b in (self.adam_beta1, self.adam_beta2):
            if not 0.0 < b < 1.0:
                raise ValueError("adam betas must lie in (0, 1)")
        if self.adam_epsilon <= 0:
            raise ValueError("adam_epsilon must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclass(frozen=True)
class MetricsRecord:
    epoch: int
    split: str
    loss: float
    accuracy: float
    auc: float


CSV_HEADER = "epoch,split,loss,accuracy,auc"


def format_metrics_csv(records: list[MetricsRecord]) -> str:
    lines = [CSV_HEADER]
    for r in records:
        lines.append(
            f"{r.epoch},{r.split},{r.loss:.6f},{r.accuracy:.6f},{r.auc:.6f}"
        )
    return "\n".join(lines) + "\n"


def bce_loss(y_hat: float, y: float) -> tuple[float, float]:
    """Binary cross-entropy and d loss / d y_hat, clamped away from {0, 1}."""
    p = min(max(y_hat, _CLAMP), 1.0 - _CLAMP)
    loss = -(y * math.log(p) + (1.0 - y) * math.log(1.0 - p))
    grad = (p - y) / (p * (1.0 - p))
    return loss, grad


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
    t: int,
) -> None:
    """One bias-corrected Adam update, in place; t is the 1-based step index."""
    b1, b2 = config.adam_beta1, config.adam_beta2
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} ({k})")
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        m_hat = state.m[k] / (1.0 - b1**t)
        v_hat = state.v[k] / (1.0 - b2**t)
        p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_epsilon)


def roc_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC with midrank tie handling."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_auc needs both classes present")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores))
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum_pos = float(np.sum(ranks[labels == 1]))
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def accuracy(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> float:
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    return float(np.mean((scores >= threshold).astype(int) == labels))


# ---------------------------------------------------------------------------
# gradient checking


@dataclass(frozen=True)
class GradCheckReport:
    group_errors: dict[str, float]  # max relative error per parameter group
    tolerance: float

    @property
    def max_error(self) -> float:
        return max(self.group_errors.values())

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def grad_check(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    sample: tuple[np.ndarray, float, float, int],
    tolerance: float = 1e-4,
    step: float = 1e-5,
) -> GradCheckReport:
    """Central finite differences of the per-sample loss vs the analytic
    backward pass, in eval mode.  Relative error per group is
    max |analytic - numeric| / max(|analytic|_inf, |numeric|_inf, 1e-8).
    """
    image, m0, pt, label = sample

    def loss_at(ps: dict[str, np.ndarray]) -> float:
        prob, _ = model_mod.model_forward(image, m0, pt, ps, config, training=False)
        return bce_loss(prob, label)[0]

    prob, trace = model_mod.model_forward(image, m0, pt, params, config, training=False)
    _, d_prob = bce_loss(prob, label)
    analytic = model_mod.model_backward(trace, d_prob)

    errors: dict[str, float] = {}
    for name, p in params.items():
        numeric = np.zeros_like(p)
        flat = p.reshape(-1)
        num_flat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_at(params)
            flat[i] = orig - step
            down = loss_at(params)
            flat[i] = orig
            num_flat[i] = (up - down) / (2.0 * step)
        a = analytic[name]
        scale = max(np.abs(a).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
        errors[name] = float(np.abs(a - numeric).max(initial=0.0) / scale)
    return GradCheckReport(group_errors=errors, tolerance=tolerance)


# ---------------------------------------------------------------------------
# epoch loop


def _eval_split(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    images: np.ndarray,
    aux: np.ndarray,
    labels: np.ndarray,
) -> tuple[float, np.ndarray]:
    losses = np.empty(len(labels))
    scores = np.empty(len(labels))
    for i in range(len(labels)):
        prob, _ = model_mod.model_forward(
            images[i], aux[i, 0], aux[i, 1], params, config, training=False
        )
        scores[i] = prob
        losses[i], _ = bce_loss(prob, float(labels[i]))
    return float(losses.mean()), scores


def evaluate(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    split: tuple[np.ndarray, np.ndarray, np.ndarray],
    epoch: int = 0,
    split_name: str = "test",
) -> MetricsRecord:
    images, aux, labels = split
    loss, scores = _eval_split(params, config, images, aux, labels)
    return MetricsRecord(
        epoch=epoch,
        split=split_name,
        loss=loss,
        accuracy=accuracy(scores, labels),
        auc=roc_auc(scores, labels),
    )


def train_loop(
    params: dict[str, np.ndarray],
    model_config: ModelConfig,
    train_config: TrainConfig,
    train_split: tuple[np.ndarray, np.ndarray, np.ndarray],
    val_split: tuple[np.ndarray, np.ndarray, np.ndarray],
) -> tuple[list[MetricsRecord], dict[str, np.ndarray]]:
    """Adam training with per-epoch validation.

    Returns the metric records (train + val per epoch) and the parameter
    snapshot with the best validation AUC.
    """
    config = replace(model_config, dropout_rate=train_config.dropout_rate)
    images, aux, labels = train_split
    n = len(labels)
    rng = np.random.default_rng(train_config.seed)
    state = AdamState.zeros_like(params)
    records: list[MetricsRecord] = []
    best_auc = -1.0
    best_params = {k: v.copy() for k, v in params.items()}
    step = 0
    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(n)
        epoch_losses = np.empty(n)
        epoch_scores = np.empty(n)
        epoch_labels = labels[order]
        for start in range(0, n, train_config.batch_size):
            batch = order[start : start + train_config.batch_size]
            grads = model_mod.zero_grads(params)
            batch_scale = 1.0 / len(batch)
            for pos, idx in enumerate(batch):
                prob, trace = model_mod.model_forward(
                    images[idx], aux[idx, 0], aux[idx, 1], params, config,
                    training=True, rng=rng,
                )
                loss, d_prob = bce_loss(prob, float(labels[idx]))
                epoch_losses[start + pos] = loss
                epoch_scores[start + pos] = prob
                sample_grads = model_mod.model_backward(trace, d_prob)
                for k in grads:
                    grads[k] += batch_scale * sample_grads[k]
            step += 1
            adam_step(params, grads, state, train_config, step)
        records.append(
            MetricsRecord(
                epoch=epoch,
                split="train",
                loss=float(epoch_losses.mean()),
                accuracy=accuracy(epoch_scores, epoch_labels),
                auc=roc_auc(epoch_scores, epoch_labels),
            )
        )
        val_record = evaluate(params, config, val_split, epoch, "val")
        records.append(val_record)
        if val_record.auc > best_auc:
            best_auc = val_record.auc
            best_params = {k: v.copy() for k, v in params.items()}
    return records, best_params
