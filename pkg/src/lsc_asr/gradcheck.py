"""Central finite-difference gradient checking."""
from __future__ import annotations

import numpy as np

from .autograd import DTYPE, Tensor


class NumericError(ArithmeticError):
    """Non-finite value met while checking gradients."""


def _objective(op, tensors, weights):
    out = op(*tensors)
    out = out if isinstance(out, Tensor) else Tensor(out)
    if weights is None:
        return out, float(np.sum(out.data))
    return out, float(np.sum(out.data * weights))


def relative_error(analytic, numeric):
    a, n = np.abs(analytic), np.abs(numeric)
    return np.abs(analytic - numeric) / np.maximum(np.maximum(a, n), 1e-8)


def check_gradients(op, inputs, epsilon=1e-4, check=None, seed=0, project=True):
    """Worst relative error between backprop and central differences.

    Parameters
    ----------
    op : callable
        Maps tensors to a tensor.  Must be pure.
    inputs : sequence of array_like
        Point of evaluation.  Every input listed in ``check`` (default: all)
        is perturbed coordinate by coordinate.
    epsilon : float
        Finite-difference step.
    project : bool
        If true the scalar objective is ``sum(out * w)`` with a fixed random
        ``w``; otherwise ``sum(out)``.

    Returns
    -------
    float
        ``max |a - n| / max(|a|, |n|, 1e-8)`` over all checked coordinates.
    """
    arrays = [np.array(x, dtype=DTYPE) for x in inputs]
    check = range(len(arrays)) if check is None else check
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = op(*tensors)
    weights = None
    if project:
        weights = np.random.default_rng(seed).uniform(0.5, 1.5, size=out.shape) * \
            np.random.default_rng(seed + 1).choice([-1.0, 1.0], size=out.shape)
    out.backward(np.ones(out.shape) if weights is None else weights)

    worst = 0.0
    for i in check:
        analytic = tensors[i].grad if tensors[i].grad is not None else np.zeros_like(arrays[i])
        numeric = np.zeros_like(arrays[i])
        flat = arrays[i].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            _, fp = _objective(op, [Tensor(a) for a in arrays], weights)
            flat[j] = orig - epsilon
            _, fm = _objective(op, [Tensor(a) for a in arrays], weights)
            flat[j] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError(f"non-finite objective perturbing input {i} coordinate {j}")
            numeric.reshape(-1)[j] = (fp - fm) / (2 * epsilon)
        if not np.all(np.isfinite(analytic)):
            bad = int(np.flatnonzero(~np.isfinite(analytic.reshape(-1)))[0])
            raise NumericError(f"non-finite analytic gradient at input {i} coordinate {bad}")
        if flat.size:
            worst = max(worst, float(np.max(relative_error(analytic, numeric))))
    return worst


def check_store_gradients(loss_fn, store, names=None, epsilon=1e-4, max_coords=None, seed=0):
    """Gradient check of a scalar ``loss_fn()`` w.r.t. parameters in ``store``.

    ``max_coords`` samples that many coordinates per parameter (all if None).
    """
    names = store.names() if names is None else names
    store.zero_grad()
    loss_fn().backward()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in names:
        p = store[name]
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        analytic = p.grad.reshape(-1)[idx]
        numeric = np.empty(len(idx))
        for k, j in enumerate(idx):
            orig = flat[j]
            flat[j] = orig + epsilon
            fp = loss_fn().item()
            flat[j] = orig - epsilon
            fm = loss_fn().item()
            flat[j] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError(f"non-finite loss perturbing {name} coordinate {j}")
            numeric[k] = (fp - fm) / (2 * epsilon)
        if len(idx):
            worst = max(worst, float(np.max(relative_error(analytic, numeric))))
    store.zero_grad()
    return worst
