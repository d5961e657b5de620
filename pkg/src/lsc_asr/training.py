"""Toy-scale joint CTC/attention training loop."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .augment import utterance_rng
from .ctc import CtcNumericError
from .model import HybridModel, center_frequencies, frames_for
from .optim import SGD, Adam

log = logging.getLogger(__name__)


class DivergenceError(ArithmeticError):
    def __init__(self, step, value):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step


def edit_distance(a, b):
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def token_accuracy(refs, hyps):
    """``1 - total edit distance / total reference tokens``, floored at 0."""
    errors = sum(edit_distance(r, h) for r, h in zip(refs, hyps))
    total = sum(len(r) for r in refs)
    return max(0.0, 1.0 - errors / total)


@dataclass
class TrainResult:
    model: HybridModel
    history: list = field(default_factory=list)
    best_accuracy: float = -1.0
    best_epoch: int = -1
    best_values: dict = None
    init_centers: np.ndarray = None
    seconds: float = 0.0


def check_cutoffs(model):
    f1, f2 = model.cfg.frontend.sinc.cutoffs(model.store)
    bank = model.cfg.frontend.sinc
    assert np.all(f1 >= bank.min_low) and np.all(f2 >= f1) and np.all(f2 <= 0.5)


def train(cfg, utts, tokenizer, on_epoch=None, model=None):
    """Per-utterance SGD over ``utts``; returns a :class:`TrainResult`.

    The best-accuracy parameters (greedy CTC token accuracy on the training
    utterances, no augmentation) are kept in ``best_values``.
    """
    tc = cfg.train
    model = model or HybridModel(cfg)
    scales = {"sinc.": tc.sinc_lr_scale}
    if tc.optimizer == "adam":
        opt = Adam(model.store, tc.lr, clip_norm=tc.clip_norm, lr_scale=scales)
    else:
        opt = SGD(model.store, tc.lr, tc.momentum, tc.clip_norm, scales)
    frames = [frames_for(u.audio, cfg) for u in utts]
    targets = [tokenizer.encode(u.text) for u in utts]
    result = TrainResult(model, init_centers=center_frequencies(model))
    order_rng = np.random.default_rng(tc.seed)
    start = time.perf_counter()
    step = 0
    for epoch in range(1, tc.epochs + 1):
        total, att_sum, ctc_sum = 0.0, 0.0, 0.0
        for i in order_rng.permutation(len(utts)):
            rng = utterance_rng(cfg.augment.seed, utts[i].uid, epoch)
            try:
                loss, (l_att, l_ctc) = model.loss(frames[i], targets[i], tc.lam, train=True, rng=rng)
            except CtcNumericError:
                raise DivergenceError(step, float("nan")) from None
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError(step, value)
            loss.backward()
            opt.step()
            check_cutoffs(model)
            total += value
            att_sum += 0.0 if math.isnan(l_att) else l_att
            ctc_sum += 0.0 if math.isnan(l_ctc) else l_ctc
            step += 1
        hyps = [model.greedy_ctc(f) for f in frames]
        acc = token_accuracy(targets, hyps)
        centers = center_frequencies(model)
        drift = float(np.max(np.abs(centers - result.init_centers) / result.init_centers))
        n = len(utts)
        row = {"epoch": epoch, "loss": total / n, "att_loss": att_sum / n, "ctc_loss": ctc_sum / n,
               "accuracy": acc, "max_center_drift": drift}
        result.history.append(row)
        if acc > result.best_accuracy:
            result.best_accuracy, result.best_epoch = acc, epoch
            result.best_values = model.store.values()
        log.info("epoch %d loss %.4f acc %.3f drift %.4f", epoch, row["loss"], acc, drift)
        if on_epoch:
            on_epoch(row)
        if acc >= tc.stop_at_accuracy:
            break
    result.seconds = time.perf_counter() - start
    return result
