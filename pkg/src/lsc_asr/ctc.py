"""CTC: forward-backward loss, greedy collapse and incremental prefix scores.

Index 0 of the posterior columns is the blank.  All dynamic programming is
done in log space.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import _make, as_tensor

BLANK = 0
NEG_INF = -np.inf


class InfeasibleAlignmentError(ValueError):
    """The target cannot be aligned to that few frames."""


class CtcNumericError(ArithmeticError):
    pass


def min_frames(target):
    """Frames needed to emit ``target``: one per label plus one blank per repeat."""
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def _extend(target):
    ext = np.zeros(2 * len(target) + 1, dtype=np.intp)
    ext[1::2] = target
    skip = np.zeros(len(ext), dtype=bool)
    for s in range(3, len(ext), 2):
        skip[s] = ext[s] != ext[s - 2]
    return ext, skip


def _check_target(target, n_classes):
    target = [int(t) for t in target]
    if not target:
        raise ValueError("CTC target must be non-empty")
    bad = [t for t in target if t <= BLANK or t >= n_classes]
    if bad:
        raise ValueError(f"target tokens {bad} outside vocabulary 1..{n_classes - 1}")
    return target


def forward_backward(log_probs, target):
    """Return ``(log p(Y|X), occupancy)`` where occupancy is ``(T, K)``."""
    lp = np.asarray(log_probs, dtype=np.float64)
    T, K = lp.shape
    target = _check_target(target, K)
    if T < min_frames(target):
        raise InfeasibleAlignmentError(
            f"{T} frames cannot emit target of length {len(target)} "
            f"(needs {min_frames(target)})")
    ext, skip = _extend(target)
    S = len(ext)
    emit = lp[:, ext]

    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        a = prev.copy()
        a[1:] = np.logaddexp(a[1:], prev[:-1])
        a[2:] = np.where(skip[2:], np.logaddexp(a[2:], prev[:-2]), a[2:])
        alpha[t] = a + emit[t]

    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = emit[T - 1, S - 1]
    beta[T - 1, S - 2] = emit[T - 1, S - 2]
    skip_fwd = np.zeros(S, dtype=bool)
    skip_fwd[:-2] = skip[2:]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        b = nxt.copy()
        b[:-1] = np.logaddexp(b[:-1], nxt[1:])
        b[:-2] = np.where(skip_fwd[:-2], np.logaddexp(b[:-2], nxt[2:]), b[:-2])
        beta[t] = b + emit[t]

    loglik = np.logaddexp(alpha[T - 1, S - 1], alpha[T - 1, S - 2])
    if not np.isfinite(loglik):
        raise CtcNumericError("CTC likelihood underflowed to zero")
    gamma = np.exp(alpha + beta - emit - loglik)
    occupancy = np.zeros((T, K))
    np.add.at(occupancy.T, ext, gamma.T)
    return float(loglik), occupancy


def ctc_loss(log_probs, target):
    """``(-log p(Y|X), d loss / d logits)`` for ``log_probs = log_softmax(logits)``."""
    lp = np.asarray(log_probs, dtype=np.float64)
    loglik, occ = forward_backward(lp, target)
    return -loglik, np.exp(lp) - occ


def ctc_loss_op(logits, target):
    """Differentiable scalar CTC loss on pre-softmax ``(T, V+1)`` logits."""
    logits = as_tensor(logits)
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    loss, grad = ctc_loss(lp, target)
    return _make(np.array(loss), (logits,), lambda g: (g * grad,))


def collapse(path):
    """Merge repeats not separated by blank, then drop blanks."""
    out, prev = [], None
    for k in path:
        k = int(k)
        if k != prev and k != BLANK:
            out.append(k)
        prev = k
    return out


def greedy_decode(posteriors):
    return collapse(np.argmax(np.asarray(posteriors), axis=-1))


# ---------------------------------------------------------------- prefix scoring

@dataclass(frozen=True)
class CtcPrefixState:
    """Forward variables of a prefix: log prob that frames ``0..t`` emit
    exactly the prefix, ending in a non-blank (``r_n``) or blank (``r_b``)."""

    prefix: tuple
    r_n: np.ndarray
    r_b: np.ndarray
    score: float  # log prob that the collapsed output starts with ``prefix``


class CtcPrefixScorer:
    """Incremental prefix scores over fixed ``(T, V+1)`` log posteriors."""

    def __init__(self, log_probs):
        self.log_probs = np.asarray(log_probs, dtype=np.float64)
        self.T, self.K = self.log_probs.shape

    def initial_state(self):
        r_b = np.cumsum(self.log_probs[:, BLANK])
        return CtcPrefixState((), np.full(self.T, NEG_INF), r_b, 0.0)

    def extend(self, state, token):
        token = int(token)
        if not BLANK < token < self.K:
            raise ValueError(f"token {token} outside vocabulary 1..{self.K - 1}")
        y = self.log_probs
        phi = state.r_b.copy()
        if not state.prefix or state.prefix[-1] != token:
            phi = np.logaddexp(phi, state.r_n)
        r_n = np.full(self.T, NEG_INF)
        r_b = np.full(self.T, NEG_INF)
        r_n[0] = y[0, token] if not state.prefix else NEG_INF
        for t in range(1, self.T):
            r_n[t] = np.logaddexp(r_n[t - 1], phi[t - 1]) + y[t, token]
            r_b[t] = np.logaddexp(r_b[t - 1], r_n[t - 1]) + y[t, BLANK]
        psi = np.logaddexp.reduce(np.concatenate([[r_n[0]], phi[:-1] + y[1:, token]]))
        return CtcPrefixState(state.prefix + (token,), r_n, r_b, float(psi))

    def terminal(self, state):
        """Log prob that the collapsed output is exactly ``state.prefix``."""
        return float(np.logaddexp(state.r_n[-1], state.r_b[-1]))

    def extend_all(self, state):
        """Prefix scores for every non-blank token (vectorized over tokens)."""
        y = self.log_probs
        toks = np.arange(1, self.K)
        phi = np.repeat(state.r_b[:, None], len(toks), axis=1)
        same = np.array([bool(state.prefix) and state.prefix[-1] == c for c in toks])
        phi[:, ~same] = np.logaddexp(phi[:, ~same], state.r_n[:, None])
        first = y[0, toks] if not state.prefix else np.full(len(toks), NEG_INF)
        return np.logaddexp.reduce(np.vstack([first[None, :], phi[:-1] + y[1:, toks]]), axis=0)


def ctc_prefix_score(log_probs, prefix, state=None, next_token=None):
    """Score ``prefix + [next_token]`` (or terminate ``prefix`` if next_token is None).

    Without a cached ``state`` the prefix is rebuilt from the empty prefix.
    Returns ``(log_prob, new_state)``.
    """
    scorer = CtcPrefixScorer(log_probs)
    if state is None:
        state = scorer.initial_state()
        for tok in prefix:
            state = scorer.extend(state, tok)
    elif tuple(state.prefix) != tuple(prefix):
        raise ValueError(f"state is for prefix {state.prefix}, not {tuple(prefix)}")
    if next_token is None:
        return scorer.terminal(state), state
    new = scorer.extend(state, next_token)
    return new.score, new
