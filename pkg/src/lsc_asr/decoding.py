"""Joint CTC/attention beam search with shallow LM fusion, plus toy LMs."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .attention import EOS
from .ctc import CtcPrefixScorer


class DomainError(ValueError):
    pass


def fuse(logp_att, logp_lm, beta):
    """Shallow fusion: ``log p_att + beta * log p_lm``."""
    return logp_att + beta * logp_lm


def combine(att, ctc, lm, lam, beta):
    """``(1 - lam) att + lam ctc + beta lm``; zero-weighted terms are skipped so
    that an impossible (-inf) component with weight 0 cannot produce NaN."""
    score = 0.0
    if lam != 1.0:
        score += (1.0 - lam) * att
    if lam != 0.0:
        score += lam * ctc
    if beta != 0.0:
        score += beta * lm
    return score


# ---------------------------------------------------------------- language models

class UniformLM:
    """Every next token (including end-of-sequence) equally likely."""

    def __init__(self, vocab_size):
        self.vocab_size = vocab_size

    def initial_state(self):
        return None

    def next_state(self, state, token):
        return None

    def log_probs(self, state):
        return np.full(self.vocab_size + 1, -math.log(self.vocab_size + 1))

    def to_dict(self):
        return {"type": "uniform", "vocab_size": self.vocab_size}


class BigramLM:
    """Add-one smoothed bigram over token ids; context 0 is start-of-sequence,
    outcome 0 is end-of-sequence."""

    def __init__(self, counts):
        self.counts = np.asarray(counts, dtype=np.float64)
        self.vocab_size = self.counts.shape[0] - 1
        smoothed = self.counts + 1.0
        self._logp = np.log(smoothed / smoothed.sum(axis=1, keepdims=True))

    def initial_state(self):
        return 0

    def next_state(self, state, token):
        return int(token)

    def log_probs(self, state):
        return self._logp[state]

    def to_dict(self):
        return {"type": "bigram", "counts": self.counts.astype(int).tolist()}


def bigram_lm_train(corpus, vocab_size):
    """Fit a :class:`BigramLM` on token-id sequences (ids in ``1..vocab_size``)."""
    corpus = [list(s) for s in corpus]
    if not corpus or not any(corpus):
        raise DomainError("cannot train a language model on an empty corpus")
    counts = np.zeros((vocab_size + 1, vocab_size + 1))
    for seq in corpus:
        bad = [t for t in seq if not 1 <= t <= vocab_size]
        if bad:
            raise DomainError(f"tokens {bad} outside vocabulary 1..{vocab_size}")
        prev = 0
        for tok in seq + [EOS]:
            counts[prev, tok] += 1
            prev = tok
    return BigramLM(counts)


def sequence_logprob(lm, tokens):
    state, total = lm.initial_state(), 0.0
    for tok in list(tokens) + [EOS]:
        total += lm.log_probs(state)[tok]
        state = lm.next_state(state, tok)
    return total


def perplexity(lm, corpus):
    total, n = 0.0, 0
    for seq in corpus:
        total += sequence_logprob(lm, seq)
        n += len(seq) + 1
    return math.exp(-total / n)


def lm_from_dict(d):
    if d["type"] == "uniform":
        return UniformLM(d["vocab_size"])
    if d["type"] == "bigram":
        return BigramLM(d["counts"])
    raise DomainError(f"unknown language model type {d['type']!r}")


def save_lm(path, lm):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(lm.to_dict(), fh)


def load_lm(path):
    with open(path, encoding="utf-8") as fh:
        return lm_from_dict(json.load(fh))


# ---------------------------------------------------------------- beam search

@dataclass
class Hypothesis:
    tokens: tuple
    att_state: object
    ctc_state: object
    lm_state: object
    att: float = 0.0
    ctc: float = 0.0
    lm: float = 0.0
    score: float = 0.0
    finished: bool = False
    truncated: bool = False
    age: int = 0
    steps: list = field(default_factory=list)


def beam_search(decoder, ctc_log_probs=None, beam_width=4, lam=0.4, beta=0.5, lm=None,
                max_len=None, n_best=None, trace=None):
    """Ranked hypotheses from joint attention/CTC/LM beam search.

    Parameters
    ----------
    decoder
        Object with ``initial()`` and ``step(state) -> (log p over V+1, state')``
        and ``advance(state, token)``; index 0 of the distribution is
        end-of-sequence.
    ctc_log_probs : ndarray (T, V+1) or None
        Required unless ``lam == 0``.
    trace : list or None
        If given, receives one list per expansion step holding the
        ``(parent tokens, token)`` pairs kept, best first.
    """
    if beam_width < 1:
        raise DomainError(f"beam width must be >= 1, got {beam_width}")
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"CTC weight must lie in [0, 1], got {lam}")
    if ctc_log_probs is None and lam != 0.0:
        raise DomainError("CTC posteriors are required when lam > 0")
    scorer = CtcPrefixScorer(ctc_log_probs) if ctc_log_probs is not None else None
    if max_len is None:
        max_len = scorer.T if scorer is not None else 100

    root = Hypothesis((), decoder.initial(), scorer.initial_state() if scorer else None,
                      lm.initial_state() if lm else None)
    live, finished = [root], []
    age = 1
    for _ in range(max_len + 1):
        candidates = []
        for order, hyp in enumerate(live):
            logp_att, att_state = decoder.step(hyp.att_state)
            logp_lm = lm.log_probs(hyp.lm_state) if lm else np.zeros(len(logp_att))
            if scorer:
                ctc_ext = np.concatenate([[scorer.terminal(hyp.ctc_state)],
                                          scorer.extend_all(hyp.ctc_state)])
            else:
                ctc_ext = np.zeros(len(logp_att))
            # at the length limit only end-of-sequence may follow
            tokens = [EOS] if len(hyp.tokens) >= max_len else range(len(logp_att))
            for tok in tokens:
                att = hyp.att + float(logp_att[tok])
                lmv = hyp.lm + float(logp_lm[tok])
                ctcv = float(ctc_ext[tok])
                s = combine(att, ctcv, lmv, lam, beta)
                if s > -np.inf:
                    candidates.append((-s, tok, hyp.age, order, att, ctcv, lmv, att_state))
        if not candidates:
            break
        candidates.sort(key=lambda c: (c[0], c[1], c[2]))
        if trace is not None:
            trace.append([(live[c[3]].tokens, c[1]) for c in candidates[:beam_width]])
        new_live = []
        for neg, tok, _, order, att, ctcv, lmv, att_state in candidates[:beam_width]:
            parent = live[order]
            h = Hypothesis(parent.tokens, att_state, parent.ctc_state, parent.lm_state,
                           att, ctcv, lmv, -neg, age=age, steps=parent.steps + [tok])
            age += 1
            if tok == EOS:
                h.finished = True
                finished.append(h)
                continue
            h.tokens = parent.tokens + (tok,)
            h.att_state = decoder.advance(att_state, tok)
            if scorer:
                h.ctc_state = scorer.extend(parent.ctc_state, tok)
            if lm:
                h.lm_state = lm.next_state(parent.lm_state, tok)
            new_live.append(h)
        if not new_live:
            break
        live = new_live
        if finished and max(f.score for f in finished) >= max(h.score for h in live):
            break
    if not finished:
        best = min(live, key=lambda h: (-h.score, h.age))
        return [replace(best, truncated=True)]
    finished.sort(key=lambda h: (-h.score, h.age))
    return finished[:n_best] if n_best else finished


def rescore(decoder, tokens, ctc_log_probs, lam, beta, lm=None):
    """Recompute ``(att, ctc, lm, combined)`` for a finished token sequence from scratch."""
    state = decoder.initial()
    att = 0.0
    for tok in list(tokens) + [EOS]:
        logp, state = decoder.step(state)
        att += float(logp[tok])
        state = decoder.advance(state, tok)
    ctc = 0.0
    if ctc_log_probs is not None:
        scorer = CtcPrefixScorer(ctc_log_probs)
        cs = scorer.initial_state()
        for tok in tokens:
            cs = scorer.extend(cs, tok)
        ctc = scorer.terminal(cs)
    lmv = sequence_logprob(lm, tokens) if lm else 0.0
    return att, ctc, lmv, combine(att, ctc, lmv, lam, beta)


def greedy_attention_decode(decoder, max_len=100):
    state = decoder.initial()
    out = []
    for _ in range(max_len):
        logp, state = decoder.step(state)
        tok = int(np.argmax(logp))
        if tok == EOS:
            break
        out.append(tok)
        state = decoder.advance(state, tok)
    return out
