"""First-order optimizer over a :class:`~lsc_asr.layers.ParameterStore`."""
from __future__ import annotations

import numpy as np


def sgd_step(store, lr):
    """``value -= lr * grad`` for every parameter, then zero the gradients."""
    for _, p in store.items():
        p.data -= lr * p.grad
    store.zero_grad()
    return store


class SGD:
    """SGD with optional momentum, per-prefix learning-rate scales and
    global gradient-norm clipping."""

    def __init__(self, store, lr, momentum=0.0, clip_norm=None, lr_scale=None):
        self.store = store
        self.lr = lr
        self.momentum = momentum
        self.clip_norm = clip_norm
        self.lr_scale = dict(lr_scale or {})
        self._velocity = {k: np.zeros_like(p.data) for k, p in store.items()}

    def _scale(self, name):
        for prefix, s in self.lr_scale.items():
            if name.startswith(prefix):
                return s
        return 1.0

    def grad_norm(self):
        return float(np.sqrt(sum(np.sum(p.grad ** 2) for _, p in self.store.items())))

    def step(self):
        factor = 1.0
        if self.clip_norm is not None:
            norm = self.grad_norm()
            if norm > self.clip_norm:
                factor = self.clip_norm / norm
        for name, p in self.store.items():
            v = self._velocity[name]
            v *= self.momentum
            v += factor * p.grad
            p.data -= self.lr * self._scale(name) * v
        self.store.zero_grad()


class Adam:
    """Adam with bias correction, per-prefix learning-rate scales and clipping."""

    def __init__(self, store, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, clip_norm=None, lr_scale=None):
        self.store = store
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.clip_norm = clip_norm
        self.lr_scale = dict(lr_scale or {})
        self.t = 0
        self._m = {k: np.zeros_like(p.data) for k, p in store.items()}
        self._v = {k: np.zeros_like(p.data) for k, p in store.items()}

    _scale = SGD._scale
    grad_norm = SGD.grad_norm

    def step(self):
        factor = 1.0
        if self.clip_norm is not None:
            norm = self.grad_norm()
            if norm > self.clip_norm:
                factor = self.clip_norm / norm
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for name, p in self.store.items():
            g = factor * p.grad
            m, v = self._m[name], self._v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= self.lr * self._scale(name) * (m / c1) / (np.sqrt(v / c2) + self.eps)
        self.store.zero_grad()
