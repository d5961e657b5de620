"""SpecAugment-style masking and linear time warping of feature sequences."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AugmentPolicy:
    num_time_masks: int = 2
    max_time_mask: int = 40
    num_channel_masks: int = 2
    max_channel_mask: int = 30
    warp_window: int = 5
    raw_time_masks: int = 0
    max_raw_mask_samples: int = 1600
    seed: int = 0

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if k != "seed" and v < 0:
                raise ValueError(f"augment policy field {k} must be >= 0, got {v}")


def utterance_rng(seed, utt_id, epoch=0):
    """Independent stream per (seed, utterance, epoch)."""
    return np.random.default_rng([int(seed), int(utt_id), int(epoch)])


def mask_array(T, C, policy, rng):
    """0/1 array of shape (T, C) with time and channel blocks zeroed."""
    mask = np.ones((T, C))
    for _ in range(policy.num_time_masks):
        w = int(rng.integers(0, min(policy.max_time_mask, T) + 1))
        t0 = int(rng.integers(0, T - w + 1))
        mask[t0:t0 + w, :] = 0.0
    for _ in range(policy.num_channel_masks):
        w = int(rng.integers(0, min(policy.max_channel_mask, C) + 1))
        c0 = int(rng.integers(0, C - w + 1))
        mask[:, c0:c0 + w] = 0.0
    return mask


def apply_masks(features, policy, rng):
    """Zero random time and channel blocks; the input is never modified."""
    if isinstance(features, Tensor):
        return ag.mul(features, mask_array(*features.shape, policy, rng))
    x = np.asarray(features, dtype=np.float64)
    return x * mask_array(*x.shape, policy, rng)


def warp_matrix(T, center, shift):
    """Linear-interpolation matrix ``M`` with ``warped = M @ x``.

    Output frame ``center + shift`` reads source frame ``center``; frames 0
    and ``T - 1`` stay fixed and the two pieces in between are stretched
    linearly.
    """
    target = center + shift
    j = np.arange(T, dtype=np.float64)
    src = np.empty(T)
    left = j <= target
    src[left] = j[left] * (center / target) if target > 0 else 0.0
    right = ~left
    span_out = (T - 1) - target
    span_in = (T - 1) - center
    src[right] = center + (j[right] - target) * (span_in / span_out if span_out > 0 else 0.0)
    lo = np.clip(np.floor(src).astype(int), 0, T - 1)
    hi = np.clip(lo + 1, 0, T - 1)
    frac = src - lo
    M = np.zeros((T, T))
    M[np.arange(T), lo] += 1.0 - frac
    M[np.arange(T), hi] += frac
    return M


def apply_time_warp(features, policy, rng):
    W = policy.warp_window
    T = features.shape[0]
    if W == 0:
        return features
    if T <= 2 * W:
        log.debug("time warp skipped: %d frames <= 2 * window %d", T, W)
        return features
    center = int(rng.integers(W, T - W))
    shift = int(rng.integers(-W, W + 1))
    M = warp_matrix(T, center, shift)
    if isinstance(features, Tensor):
        return ag.matmul(M, features)
    return M @ np.asarray(features, dtype=np.float64)


def augment_features(features, policy, rng):
    """Time warp followed by masking."""
    return apply_masks(apply_time_warp(features, policy, rng), policy, rng)


def apply_raw_time_mask(samples, policy, rng):
    """Zero random spans of raw samples (time-domain variant)."""
    x = np.array(samples, dtype=np.float64)
    n = len(x)
    for _ in range(policy.raw_time_masks):
        w = int(rng.integers(0, min(policy.max_raw_mask_samples, n) + 1))
        s0 = int(rng.integers(0, n - w + 1))
        x[s0:s0 + w] = 0.0
    return x
