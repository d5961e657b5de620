"""Location-aware attention decoder and the attention / joint losses.

Token ids: ``1..V`` are vocabulary entries.  In the decoder's output
distribution index 0 is end-of-sequence; as an input token, 0 is the
start-of-sequence symbol.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor, _make, as_tensor
from .layers import embedding, init_embedding, init_linear, init_lstm, linear, lstm_step

SOS = EOS = 0


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class AttentionConfig:
    d_att: int = 64
    k_loc: int = 15
    c_loc: int = 8
    d_dec: int = 64
    d_emb: int = 32
    n_layers: int = 1

    def __post_init__(self):
        if self.k_loc % 2 == 0:
            raise DomainError(f"location kernel width must be odd, got {self.k_loc}")


def init_attention_decoder(store, cfg, d_enc, n_out):
    """Register attention and decoder parameters; ``n_out`` = V + 1."""
    store.add_uniform("att.W_q", (cfg.d_att, cfg.d_dec), cfg.d_dec)
    store.add_uniform("att.W_h", (cfg.d_att, d_enc), d_enc)
    store.add_uniform("att.W_f", (cfg.d_att, cfg.c_loc), cfg.c_loc)
    store.add_uniform("att.K", (cfg.c_loc, cfg.k_loc), cfg.k_loc)
    store.add_uniform("att.g", (cfg.d_att,), cfg.d_att)
    init_embedding(store, "dec.embed", n_out, cfg.d_emb)
    d_in = d_enc + cfg.d_emb
    for i in range(cfg.n_layers):
        init_lstm(store, f"dec.lstm.{i}", d_in if i == 0 else cfg.d_dec, cfg.d_dec)
    init_linear(store, "dec.out", cfg.d_dec, n_out)


def location_conv(a, K):
    """Same-padded correlation of the attention vector ``a`` (T,) with each
    row of ``K`` (c_loc, k); returns ``(T, c_loc)``."""
    a, K = as_tensor(a), as_tensor(K)
    T = a.shape[0]
    c, k = K.shape
    pad = k // 2
    padded = np.concatenate([np.zeros(pad), a.data, np.zeros(pad)])
    windows = np.lib.stride_tricks.sliding_window_view(padded, k)  # (T, k)
    out = windows @ K.data.T

    def backward(g):
        gK = g.T @ windows
        gw = g @ K.data  # (T, k)
        gp = np.zeros(T + 2 * pad)
        for q in range(k):
            gp[q:q + T] += gw[:, q]
        return gp[pad:pad + T], gK

    return _make(out, (a, K), backward)


@dataclass
class DecoderState:
    hidden: list          # [(h, c)] per stacked layer
    attention: Tensor     # previous attention distribution, length T
    prev_token: int = SOS

    @property
    def query(self):
        return self.hidden[-1][0]


def initial_state(cfg, T):
    zeros = [(Tensor(np.zeros(cfg.d_dec)), Tensor(np.zeros(cfg.d_dec))) for _ in range(cfg.n_layers)]
    return DecoderState(zeros, Tensor(np.full(T, 1.0 / T)), SOS)


def precompute_keys(H, store):
    """Encoder-side term ``W_h h_t`` of the score, shared across steps."""
    return ag.matmul(as_tensor(H), ag.transpose(store["att.W_h"]))


def attention_scores(keys, query, prev_att, store, use_location=True):
    e = keys + ag.matmul(store["att.W_q"], query)
    if use_location:
        f = location_conv(prev_att, store["att.K"])
        e = e + ag.matmul(f, ag.transpose(store["att.W_f"]))
    return ag.matmul(ag.tanh(e), store["att.g"])


def attend(H, state, store, keys=None, use_location=True):
    """Return ``(a_l, c_l)`` for decoder ``state`` over encoder states ``H``."""
    H = as_tensor(H)
    keys = precompute_keys(H, store) if keys is None else keys
    scores = attention_scores(keys, state.query, state.attention, store, use_location)
    a = ag.softmax(scores)
    return a, ag.matmul(a, H)


def decoder_step(state, context, prev_token, store, cfg, attention=None):
    """Advance the decoder: returns ``(log p_Att over V+1, new state)``."""
    n_out = store["dec.embed.weight"].shape[0]
    if not 0 <= int(prev_token) < n_out:
        raise DomainError(f"unknown token {prev_token}")
    emb = embedding([int(prev_token)], store, "dec.embed")[0]
    x = ag.concat([context, emb])
    hidden = []
    for i, hc in enumerate(state.hidden):
        h, c = lstm_step(x, hc, store, f"dec.lstm.{i}")
        hidden.append((h, c))
        x = h
    logp = ag.log_softmax(linear(x, store, "dec.out"))
    att = state.attention if attention is None else attention
    return logp, DecoderState(hidden, att, int(prev_token))


def step(H, keys, state, store, cfg):
    """Attend then run one decoder step feeding ``state.prev_token``."""
    a, c = attend(H, state, store, keys)
    return decoder_step(state, c, state.prev_token, store, cfg, attention=a)


def _advance(state, token):
    return DecoderState(state.hidden, state.attention, int(token))


def attention_loss(H, target, store, cfg, return_alignment=False):
    """Teacher-forced ``-log p_Att(Y|X)`` including the end-of-sequence step."""
    target = [int(t) for t in target]
    if not target:
        raise DomainError("attention target must be non-empty")
    H = as_tensor(H)
    keys = precompute_keys(H, store)
    state = initial_state(cfg, H.shape[0])
    terms, alignment = [], []
    for y in target + [EOS]:
        logp, state = step(H, keys, state, store, cfg)
        terms.append(logp[y])
        alignment.append(state.attention.data)
        state = _advance(state, y)
    loss = -ag.sum(ag.stack(terms))
    if return_alignment:
        return loss, np.array(alignment)
    return loss


def joint_loss(l_att, l_ctc, lam):
    """``(1 - lam) * l_att + lam * l_ctc``."""
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"CTC weight must lie in [0, 1], got {lam}")
    return (1.0 - lam) * l_att + lam * l_ctc


class AttentionDecoder:
    """Step interface over fixed encoder states, as used by beam search."""

    def __init__(self, H, store, cfg):
        self.H = as_tensor(H)
        self.store = store
        self.cfg = cfg
        with ag.no_grad():
            self.keys = precompute_keys(self.H, store)

    def initial(self):
        return initial_state(self.cfg, self.H.shape[0])

    def step(self, state):
        with ag.no_grad():
            logp, new = step(self.H, self.keys, state, self.store, self.cfg)
        return logp.data, new

    def advance(self, state, token):
        return _advance(state, token)
