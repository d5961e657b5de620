"""Finite-difference gradient suite over every differentiable operation."""
from __future__ import annotations

import time

import numpy as np

from . import autograd as ag
from .attention import AttentionConfig, attention_loss, init_attention_decoder
from .ctc import ctc_loss_op
from .dconv import DConvBlockConfig, FrontEndConfig, depthwise_conv, frontend_forward, init_frontend
from .gradcheck import check_gradients, check_store_gradients
from .layers import ParameterStore, init_linear, lstm_cell, linear
from .sinc import SincFilterBank, frame_correlate, sinc_kernels

TOLERANCE = 1e-4
EPSILON = 1e-4


def _away_from_zero(rng, shape, lo=0.1, hi=2.0):
    return rng.uniform(lo, hi, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def _logc(rng, seed):
    x = _away_from_zero(rng, (3, 4))
    return check_gradients(ag.logc, [x], EPSILON, seed=seed)


def _sinc_kernel(rng, seed):
    bank = SincFilterBank(num_filters=3, kernel_len=int(rng.choice([11, 25, 31])))
    w1 = rng.uniform(0.02, 0.3, size=3)
    w2 = w1 + rng.uniform(0.02, 0.15, size=3)
    return check_gradients(lambda a, b: sinc_kernels(a, b, bank), [w1, w2], EPSILON, seed=seed)


def _frame_correlate(rng, seed):
    frames = rng.normal(size=(2, 20))
    kernels = rng.normal(size=(3, 7))
    stride = int(rng.integers(1, 4))
    return check_gradients(lambda f, k: frame_correlate(f, k, stride), [frames, kernels], EPSILON, seed=seed)


def _depthwise(rng, seed):
    x = rng.normal(size=(2, 3, 12))
    m = int(rng.integers(1, 3))
    w = rng.normal(size=(3 * m, 5))
    stride = int(rng.integers(1, 3))
    return check_gradients(lambda a, b: depthwise_conv(a, b, stride), [x, w], EPSILON, seed=seed)


def _linear(rng, seed):
    store = ParameterStore(seed)
    init_linear(store, "lin", 5, 4)
    x = ag.Tensor(rng.normal(size=(3, 5)))
    proj = rng.normal(size=(3, 4))
    return check_store_gradients(lambda: ag.sum(linear(x, store, "lin") * proj), store, epsilon=EPSILON)


def _softmax(rng, seed):
    x = rng.normal(size=(2, 5))
    return max(check_gradients(ag.softmax, [x], EPSILON, seed=seed),
               check_gradients(ag.log_softmax, [x], EPSILON, seed=seed))


def _lstm(rng, seed):
    n, nx = 3, 4
    args = [rng.normal(size=nx), rng.normal(size=n), rng.normal(size=n),
            rng.normal(scale=0.5, size=(4 * n, nx + n)), rng.normal(scale=0.5, size=4 * n)]
    return check_gradients(lstm_cell, args, EPSILON, seed=seed)


def _attention(rng, seed):
    cfg = AttentionConfig(d_att=4, k_loc=3, c_loc=2, d_dec=4, d_emb=3)
    store = ParameterStore(seed)
    init_attention_decoder(store, cfg, 5, 4)
    H = ag.Tensor(rng.normal(size=(int(rng.integers(3, 7)), 5)), requires_grad=True)
    target = [int(t) for t in rng.integers(1, 4, size=2)]
    worst = check_store_gradients(lambda: attention_loss(H, target, store, cfg), store, epsilon=EPSILON)
    worst_h = check_gradients(lambda h: attention_loss(h, target, store, cfg), [H.data], EPSILON,
                              project=False)
    return max(worst, worst_h)


def _ctc(rng, seed):
    T, V = int(rng.integers(3, 7)), int(rng.integers(2, 4))
    target = [int(t) for t in rng.integers(1, V + 1, size=int(rng.integers(1, 3)))]
    logits = rng.normal(size=(T, V + 1))
    return check_gradients(lambda z: ctc_loss_op(z, target), [logits], EPSILON, project=False)


def _frontend(rng, seed):
    cfg = FrontEndConfig(
        SincFilterBank(num_filters=3, kernel_len=9, stride=2),
        (DConvBlockConfig(3, 1, 3, 2, "none", "logc"),
         DConvBlockConfig(3, 2, 3, 1, "average", "logc")),
        6, "logc")
    store = ParameterStore(seed)
    init_frontend(store, cfg, 16000, 30.0, 8000.0)
    store["sinc.w1"].data = rng.uniform(0.02, 0.3, size=3)
    store["sinc.w2"].data = store["sinc.w1"].data + rng.uniform(0.02, 0.15, size=3)
    frames = rng.normal(size=(2, 40))
    proj = rng.normal(size=(2, 6))
    return check_store_gradients(lambda: ag.sum(frontend_forward(frames, cfg, store) * proj),
                                 store, epsilon=EPSILON)


OPERATIONS = {
    "logc": _logc,
    "sinc_kernel": _sinc_kernel,
    "sinc_correlate": _frame_correlate,
    "depthwise_conv": _depthwise,
    "linear": _linear,
    "softmax": _softmax,
    "lstm_step": _lstm,
    "attention": _attention,
    "ctc_loss": _ctc,
    "frontend_chain": _frontend,
}


def run_suite(seed=0, instances=3, ops=None):
    """Rows ``(op, instance, max relative error, passed)`` plus elapsed seconds."""
    start = time.perf_counter()
    rows = []
    for name in ops or OPERATIONS:
        for i in range(instances):
            inst_seed = seed * 1000 + i
            rng = np.random.default_rng([seed, i, len(name)])
            err = OPERATIONS[name](rng, inst_seed)
            rows.append((name, i, err, err < TOLERANCE))
    return rows, time.perf_counter() - start
