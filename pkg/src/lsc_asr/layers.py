"""Parameter storage and the elementary layers built on :mod:`lsc_asr.autograd`."""
from __future__ import annotations

import numpy as np

from . import autograd as ag
from .autograd import DTYPE, DimensionError, Tensor, _make, _sigmoid, as_tensor


class EmptySequenceError(ValueError):
    """Raised when a recurrent layer receives a zero-length sequence."""


class ParameterStore:
    """Named trainable arrays with matching gradient accumulators.

    Gradients accumulate across backward calls until :meth:`zero_grad` is
    called explicitly.
    """

    def __init__(self, seed=0):
        self._params = {}
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def __contains__(self, name):
        return name in self._params

    def __getitem__(self, name):
        return self._params[name]

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    def add(self, name, value):
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=DTYPE), requires_grad=True, name=name)
        t.zero_grad()
        self._params[name] = t
        return t

    def add_uniform(self, name, shape, fan_in):
        bound = 1.0 / np.sqrt(max(fan_in, 1))
        return self.add(name, self._rng.uniform(-bound, bound, size=shape))

    def add_zeros(self, name, shape):
        return self.add(name, np.zeros(shape))

    def zero_grad(self):
        for t in self._params.values():
            t.grad = np.zeros_like(t.data)

    def grad(self, name):
        return self._params[name].grad

    def values(self):
        return {k: t.data.copy() for k, t in self._params.items()}

    def load_values(self, values):
        missing = set(self._params) - set(values)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for k, t in self._params.items():
            v = np.asarray(values[k], dtype=DTYPE)
            if v.shape != t.data.shape:
                raise DimensionError(f"{k}: expected shape {t.data.shape}, got {v.shape}")
            t.data = v.copy()

    def count(self, prefix=""):
        return int(sum(t.data.size for k, t in self._params.items() if k.startswith(prefix)))


# ---------------------------------------------------------------- layers

def init_linear(store, name, n_in, n_out, bias=True):
    store.add_uniform(f"{name}.weight", (n_out, n_in), n_in)
    if bias:
        store.add_uniform(f"{name}.bias", (n_out,), n_in)


def linear(x, store, name):
    """``y = x W^T + b`` on the last axis of ``x``."""
    x = as_tensor(x)
    w = store[f"{name}.weight"]
    if x.shape[-1] != w.shape[1]:
        raise DimensionError(f"linear {name!r}: input {x.shape} vs weight {w.shape}")
    y = ag.matmul(x, ag.transpose(w))
    bias = f"{name}.bias"
    if bias in store:
        y = y + store[bias]
    return y


def init_embedding(store, name, n_tokens, dim):
    store.add(f"{name}.weight", store._rng.normal(0.0, 1.0, size=(n_tokens, dim)) / np.sqrt(dim))


def embedding(tokens, store, name):
    return ag.take_rows(store[f"{name}.weight"], tokens)


def init_lstm(store, name, n_in, n_hidden):
    store.add_uniform(f"{name}.W", (4 * n_hidden, n_in + n_hidden), n_hidden)
    store.add_zeros(f"{name}.b", (4 * n_hidden,))


def lstm_cell(x, h, c, W, b):
    """One LSTM step as a single differentiable node.

    Gate layout along the rows of ``W`` is (input, forget, candidate,
    output).  Returns a tensor holding ``[h', c']`` concatenated.
    """
    x, h, c, W, b = (as_tensor(v) for v in (x, h, c, W, b))
    n = h.shape[-1]
    if W.shape != (4 * n, x.shape[-1] + n) or b.shape != (4 * n,) or c.shape != h.shape:
        raise DimensionError(
            f"lstm shapes: x {x.shape}, h {h.shape}, c {c.shape}, W {W.shape}, b {b.shape}")
    xh = np.concatenate([x.data, h.data])
    z = W.data @ xh + b.data
    i = _sigmoid(z[:n])
    f = _sigmoid(z[n:2 * n])
    gt = np.tanh(z[2 * n:3 * n])
    o = _sigmoid(z[3 * n:])
    c_new = f * c.data + i * gt
    tc = np.tanh(c_new)
    h_new = o * tc
    c_old = c.data
    nx = x.shape[-1]

    def backward(g):
        gh, gc = g[:n], g[n:]
        dc = gc + gh * o * (1.0 - tc * tc)
        dz = np.concatenate([
            dc * gt * i * (1.0 - i),
            dc * c_old * f * (1.0 - f),
            dc * i * (1.0 - gt * gt),
            gh * tc * o * (1.0 - o),
        ])
        dxh = W.data.T @ dz
        return dxh[:nx], dxh[nx:], dc * f, np.outer(dz, xh), dz

    return _make(np.concatenate([h_new, c_new]), (x, h, c, W, b), backward)


def lstm_step(x, state, store, name):
    """Advance the LSTM ``name`` by one input vector; returns ``(h', c')``."""
    h, c = state
    hc = lstm_cell(x, h, c, store[f"{name}.W"], store[f"{name}.b"])
    n = hc.shape[0] // 2
    return hc[:n], hc[n:]


def init_blstmp(store, name, n_in, layers):
    """``layers`` is a sequence of ``(hidden, projection)`` sizes."""
    d = n_in
    for k, (hidden, proj) in enumerate(layers):
        init_lstm(store, f"{name}.{k}.fwd", d, hidden)
        init_lstm(store, f"{name}.{k}.bwd", d, hidden)
        init_linear(store, f"{name}.{k}.proj", 2 * hidden, proj)
        d = proj
    return d


def _run_direction(xs, store, name, hidden, reverse):
    h = Tensor(np.zeros(hidden))
    c = Tensor(np.zeros(hidden))
    out = [None] * len(xs)
    order = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
    for t in order:
        h, c = lstm_step(xs[t], (h, c), store, name)
        out[t] = h
    return out


def bidirectional_encoder(features, store, name, n_layers):
    """Stacked BLSTM layers, each followed by a linear projection.

    ``features`` is a ``(T, d)`` tensor; returns ``(T, d_proj)``.
    """
    x = as_tensor(features)
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptySequenceError(f"encoder needs a non-empty (T, d) sequence, got {x.shape}")
    for k in range(n_layers):
        hidden = store[f"{name}.{k}.fwd.b"].shape[0] // 4
        xs = [x[t] for t in range(x.shape[0])]
        fwd = _run_direction(xs, store, f"{name}.{k}.fwd", hidden, reverse=False)
        bwd = _run_direction(xs, store, f"{name}.{k}.bwd", hidden, reverse=True)
        both = ag.concat([ag.stack(fwd), ag.stack(bwd)], axis=-1)
        x = linear(both, store, f"{name}.{k}.proj")
    return x
