"""Coarse-to-fine reader training.

The auxiliary stage fits the document and paragraph heads (equal weighting);
the joint stage then optimizes the full objective while an L2 term ties the
shared bottom layers to their auxiliary-stage values.  Optimization is Adam
with global-norm gradient clipping, deterministic under a fixed seed.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore
from .reader import (
    ReaderConfig,
    ReaderExample,
    forward_example,
    is_shared_param,
    joint_loss,
    predict_answer,
)
from . import metrics as metrics_mod

GRAD_CLIP_NORM = 5.0

DEV_METRICS = {
    "em": lambda pred, golds: metrics_mod.exact_match(pred, golds),
    "token_f1": lambda pred, golds: metrics_mod.token_f1(pred, golds),
    "rouge_l": lambda pred, golds: metrics_mod.rouge_l(pred, golds),
}


class TrainError(RuntimeError):
    """Training cannot proceed (bad labels, non-finite gradients, ...)."""


@dataclass
class TrainPlan:
    stage: str
    epochs: int
    patience: Optional[int] = None
    seed: int = 0
    dev_metric: str = "token_f1"

    def __post_init__(self):
        if self.stage not in ("auxiliary", "joint"):
            raise ValueError(f"unknown stage '{self.stage}'")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.patience is not None and self.patience < 0:
            raise ValueError("patience must be >= 0")
        if self.dev_metric not in DEV_METRICS:
            raise ValueError(f"unknown dev metric '{self.dev_metric}'")


@dataclass
class OptimizerState:
    """Adam moment accumulators keyed by parameter name."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    store: ParameterStore,
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr: float = 0.0005,
) -> None:
    """One bias-corrected Adam update over every parameter in ``grads``."""
    state.step += 1
    t = state.step
    for name in sorted(grads):
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainError(f"non-finite gradient for parameter '{name}'")
        param = store[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(param.data)
            state.v[name] = np.zeros_like(param.data)
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[name] / (1.0 - state.beta1**t)
        v_hat = state.v[name] / (1.0 - state.beta2**t)
        param.data = param.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float = GRAD_CLIP_NORM) -> float:
    """Scale all gradients in place so their joint L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


@dataclass
class EpochRecord:
    stage: str
    epoch: int
    loss_de: float
    loss_pe: float
    loss_ae: Optional[float]
    loss_total: float
    dev_metric: Optional[float]
    wall_ms: float

    def to_json(self) -> dict:
        return {
            "stage": self.stage,
            "epoch": self.epoch,
            "loss_de": self.loss_de,
            "loss_pe": self.loss_pe,
            "loss_ae": self.loss_ae,
            "loss_total": self.loss_total,
            "dev_metric": self.dev_metric,
            "wall_ms": self.wall_ms,
        }


@dataclass
class TrainResult:
    history: list[EpochRecord]
    snapshot: Optional[dict[str, np.ndarray]] = None
    best_dev: Optional[float] = None


def _append_log(log_path: Optional[Path], record: EpochRecord) -> None:
    if log_path is not None:
        with open(log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record.to_json()) + "\n")


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield perm[i : i + batch_size]


def evaluate_dev(
    store: ParameterStore,
    config: ReaderConfig,
    dev: Sequence[ReaderExample],
    metric_name: str,
) -> float:
    """Mean dev metric of predicted answers against each example's golds."""
    fn = DEV_METRICS[metric_name]
    scores = []
    with ad.no_grad():
        for ex in dev:
            fw = forward_example(store, config, ex, with_losses=False)
            pred = predict_answer(fw.outputs(), config.max_span_len)
            scores.append(fn(ex.answer_text(pred.start, pred.end), ex.gold_answers))
    return float(np.mean(scores))


def train_auxiliary(
    examples: Sequence[ReaderExample],
    store: ParameterStore,
    config: ReaderConfig,
    plan: TrainPlan,
    log_path: Optional[str | Path] = None,
) -> TrainResult:
    """Stage one: minimize L_DE + L_PE and snapshot the shared parameters."""
    if plan.stage != "auxiliary":
        raise ValueError("plan.stage must be 'auxiliary'")
    labeled = [ex for ex in examples if ex.doc_labels is not None and ex.para_labels is not None]
    if not labeled:
        raise TrainError("no labeled examples")
    if not any(any(ex.doc_labels) for ex in labeled):
        raise TrainError("no positive document labels in the training data")

    log_path = Path(log_path) if log_path is not None else None
    rng = np.random.default_rng(plan.seed)
    state = OptimizerState()
    history: list[EpochRecord] = []
    for epoch in range(plan.epochs):
        t0 = time.perf_counter()
        sum_de = sum_pe = 0.0
        for batch_idx in _batches(len(labeled), config.batch_size, rng):
            batch = [labeled[i] for i in batch_idx]
            loss_de = loss_pe = None
            for ex in batch:
                fw = forward_example(store, config, ex)
                loss_de = fw.loss_de if loss_de is None else loss_de + fw.loss_de
                loss_pe = fw.loss_pe if loss_pe is None else loss_pe + fw.loss_pe
            scale = 1.0 / len(batch)
            loss_de = scale * loss_de
            loss_pe = scale * loss_pe
            total = loss_de + loss_pe
            grads = ad.gradients(total, store.as_dict())
            clip_global_norm(grads)
            adam_step(store, grads, state, config.learning_rate)
            sum_de += loss_de.item() * len(batch)
            sum_pe += loss_pe.item() * len(batch)
        record = EpochRecord(
            stage="auxiliary",
            epoch=epoch,
            loss_de=sum_de / len(labeled),
            loss_pe=sum_pe / len(labeled),
            loss_ae=None,
            loss_total=(sum_de + sum_pe) / len(labeled),
            dev_metric=None,
            wall_ms=(time.perf_counter() - t0) * 1000.0,
        )
        history.append(record)
        _append_log(log_path, record)

    snapshot = store.snapshot([name for name in store.names() if is_shared_param(name)])
    return TrainResult(history=history, snapshot=snapshot)


def train_joint(
    examples: Sequence[ReaderExample],
    store: ParameterStore,
    config: ReaderConfig,
    snapshot: Optional[dict[str, np.ndarray]],
    plan: TrainPlan,
    dev: Optional[Sequence[ReaderExample]] = None,
    log_path: Optional[str | Path] = None,
) -> TrainResult:
    """Stage two: minimize the joint objective over span-bearing examples.

    With a dev set, evaluation runs after every epoch; training stops once
    the metric fails to improve for more than ``plan.patience`` evaluations
    and the best-scoring parameters are restored.
    """
    if plan.stage != "joint":
        raise ValueError("plan.stage must be 'joint'")
    spanned = [ex for ex in examples if ex.gold_span is not None]
    if not spanned:
        raise TrainError("no examples with gold spans")

    log_path = Path(log_path) if log_path is not None else None
    rng = np.random.default_rng(plan.seed)
    state = OptimizerState()
    history: list[EpochRecord] = []
    best_metric = -math.inf
    best_params: Optional[dict[str, np.ndarray]] = None
    bad_evals = 0

    for epoch in range(plan.epochs):
        t0 = time.perf_counter()
        sum_de = sum_pe = sum_ae = 0.0
        for batch_idx in _batches(len(spanned), config.batch_size, rng):
            batch = [spanned[i] for i in batch_idx]
            loss_de = loss_pe = loss_ae = None
            for ex in batch:
                fw = forward_example(store, config, ex)
                loss_de = fw.loss_de if loss_de is None else loss_de + fw.loss_de
                loss_pe = fw.loss_pe if loss_pe is None else loss_pe + fw.loss_pe
                loss_ae = fw.loss_ae if loss_ae is None else loss_ae + fw.loss_ae
            scale = 1.0 / len(batch)
            loss_de = scale * loss_de
            loss_pe = scale * loss_pe
            loss_ae = scale * loss_ae
            total = joint_loss(loss_ae, loss_de, loss_pe, config, store, snapshot)
            grads = ad.gradients(total, store.as_dict())
            clip_global_norm(grads)
            adam_step(store, grads, state, config.learning_rate)
            sum_de += loss_de.item() * len(batch)
            sum_pe += loss_pe.item() * len(batch)
            sum_ae += loss_ae.item() * len(batch)

        dev_value = None
        if dev:
            dev_value = evaluate_dev(store, config, dev, plan.dev_metric)
        n = len(spanned)
        record = EpochRecord(
            stage="joint",
            epoch=epoch,
            loss_de=sum_de / n,
            loss_pe=sum_pe / n,
            loss_ae=sum_ae / n,
            loss_total=(sum_ae + config.lambda1 * sum_de + config.lambda2 * sum_pe) / n,
            dev_metric=dev_value,
            wall_ms=(time.perf_counter() - t0) * 1000.0,
        )
        history.append(record)
        _append_log(log_path, record)

        if dev_value is not None:
            if dev_value > best_metric:
                best_metric = dev_value
                best_params = store.snapshot()
                bad_evals = 0
            else:
                bad_evals += 1
                if plan.patience is not None and bad_evals > plan.patience:
                    break

    if best_params is not None:
        store.load_arrays(best_params)
    return TrainResult(history=history, best_dev=None if best_metric == -math.inf else best_metric)
