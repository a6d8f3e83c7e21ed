"""Per-example Adam training with seeded shuffling and best-validation retention."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..data.montage import CANONICAL, VIRTUAL
from ..data.types import SegmentPair
from ..metrics import evaluate_channels
from ..nn.optim import AdamState, adam_step
from .loss import composite_loss
from .model import GNetArch, build_gnet, gnet_backward, gnet_forward

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class GNetConfig:
    alpha: float = 1.0
    beta: float = 1.0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 11
    batch_size: int = 1
    seed: int = 0
    max_steps: int | None = None
    arch: GNetArch = field(default_factory=GNetArch)

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or (self.alpha == 0 and self.beta == 0):
            raise ValueError("alpha and beta must be >= 0 and not both zero")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float | None = None
    val_cc: dict[str, float] | None = None
    val_mae: dict[str, float] | None = None


@dataclass
class TrainingReport:
    seed: int
    steps: int = 0
    initial_train_loss: float = math.nan
    final_train_loss: float = math.nan
    best_epoch: int | None = None
    epochs: list[EpochRecord] = field(default_factory=list)
    wall_clock_s: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _stack(pairs: Sequence[SegmentPair]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([p.source for p in pairs])[..., None].astype(float)
    y = np.stack([p.target for p in pairs])[..., None].astype(float)
    return x, y


def dataset_loss(params, pairs: Sequence[SegmentPair], config: GNetConfig) -> float:
    losses = []
    for p in pairs:
        x, y = _stack([p])
        out, _ = gnet_forward(params, x, config.arch)
        losses.append(composite_loss(out, y, config.alpha, config.beta)[0])
    return math.fsum(losses) / len(losses)


def predict(params, pairs: Sequence[SegmentPair], arch: GNetArch) -> list[np.ndarray]:
    return generate(params, [p.source for p in pairs], arch)


def canonical_order(pairs: Sequence[SegmentPair]) -> list[SegmentPair]:
    return sorted(pairs, key=lambda p: p.key)


def train(dataset: Sequence[SegmentPair], config: GNetConfig, val: Sequence[SegmentPair] = (),
          params: dict[str, np.ndarray] | None = None,
          on_epoch: Callable[[EpochRecord], None] | None = None) -> tuple[dict, TrainingReport, AdamState]:
    """Train the generator; returns ``(params, report, adam_state)``.

    Examples are visited in a seeded permutation of their (subject, index)
    order, so input order does not matter. When ``val`` is given the returned
    parameters are those with the lowest validation loss.
    """
    if not dataset:
        raise TrainingError("empty training set")
    started = time.perf_counter()
    train_set = canonical_order(dataset)
    val_set = canonical_order(val)
    if params is None:
        params = build_gnet(config.arch, config.seed)
    state = AdamState.for_params(params, lr=config.lr, beta1=config.beta1,
                                 beta2=config.beta2, epsilon=config.epsilon)
    shuffle_rng = np.random.default_rng([config.seed, 1])
    report = TrainingReport(seed=config.seed)
    report.initial_train_loss = dataset_loss(params, train_set, config)
    best_val, best_params = math.inf, None

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(train_set))
        losses = []
        for start in range(0, len(order), config.batch_size):
            if config.max_steps is not None and report.steps >= config.max_steps:
                break
            batch = [train_set[i] for i in order[start : start + config.batch_size]]
            x, y = _stack(batch)
            out, cache = gnet_forward(params, x, config.arch)
            loss, dout = composite_loss(out, y, config.alpha, config.beta)
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, step {report.steps}, "
                                    f"examples {[p.key for p in batch]}")
            grads = gnet_backward(params, cache, dout, config.arch)
            adam_step(params, grads, state)
            report.steps += 1
            losses.append(loss)
        if not losses:
            break
        rec = EpochRecord(epoch=epoch, train_loss=math.fsum(losses) / len(losses))
        if val_set:
            rec.val_loss = dataset_loss(params, val_set, config)
            summary = evaluate_channels(predict(params, val_set, config.arch),
                                        [p.target for p in val_set], CANONICAL, VIRTUAL)
            rec.val_cc = {r.channel: r.cc_mean for r in summary.channels}
            rec.val_mae = {r.channel: r.mae_mean for r in summary.channels}
            if rec.val_loss < best_val:
                best_val = rec.val_loss
                best_params = {k: v.copy() for k, v in params.items()}
                report.best_epoch = epoch
        report.epochs.append(rec)
        log.info("epoch %d train_loss %.6f val_loss %s", epoch, rec.train_loss, rec.val_loss)
        if on_epoch is not None:
            on_epoch(rec)

    if best_params is not None:
        params = best_params
    report.final_train_loss = dataset_loss(params, train_set, config)
    report.wall_clock_s = time.perf_counter() - started
    return params, report, state


def generate(params, sources: Sequence[np.ndarray], arch: GNetArch) -> list[np.ndarray]:
    """Map each ``(n_source, seg_len)`` block to an ``(n_target, seg_len)`` block."""
    outs = []
    for src in sources:
        src = np.asarray(src, dtype=float)
        out, _ = gnet_forward(params, src[None, :, :, None], arch)
        outs.append(out[0, :, :, 0])
    return outs
