"""The LSC + BLSTMP hybrid CTC/attention model."""
from __future__ import annotations

import numpy as np

from . import autograd as ag
from . import ctc as ctc_mod
from .attention import AttentionDecoder, attention_loss, init_attention_decoder, joint_loss
from .augment import augment_features
from .dconv import frontend_forward, init_frontend, param_table
from .decoding import beam_search
from .layers import ParameterStore, bidirectional_encoder, init_blstmp, init_linear, linear

FRONTEND_PREFIXES = ("sinc.", "dconv.")


class HybridModel:
    def __init__(self, cfg, seed=None):
        self.cfg = cfg
        self.seed = cfg.train.seed if seed is None else seed
        self.store = ParameterStore(self.seed)
        init_frontend(self.store, cfg.frontend, cfg.audio.sample_rate, cfg.mel.f_min_hz, cfg.mel.f_max_hz)
        d_enc = init_blstmp(self.store, "enc", cfg.frontend.output_dim, cfg.model.encoder_layers)
        n_out = cfg.model.vocab_size + 1
        init_linear(self.store, "ctc.out", d_enc, n_out)
        init_attention_decoder(self.store, cfg.model.attention, d_enc, n_out)

    # -------------------------------------------------------------- forward

    def features(self, frames, train=False, rng=None):
        r = frontend_forward(frames, self.cfg.frontend, self.store)
        if train and self.cfg.train.augment:
            r = augment_features(r, self.cfg.augment, rng)
        return r

    def encode(self, frames, train=False, rng=None):
        r = self.features(frames, train, rng)
        return bidirectional_encoder(r, self.store, "enc", len(self.cfg.model.encoder_layers))

    def ctc_logits(self, H):
        return linear(H, self.store, "ctc.out")

    def loss(self, frames, target, lam=None, train=True, rng=None):
        """Joint loss tensor plus the float values of both components."""
        lam = self.cfg.train.lam if lam is None else lam
        H = self.encode(frames, train, rng)
        l_ctc = l_att = None
        if lam > 0:
            l_ctc = ctc_mod.ctc_loss_op(self.ctc_logits(H), target)
        if lam < 1:
            l_att = attention_loss(H, target, self.store, self.cfg.model.attention)
        if l_att is None:
            total = l_ctc
        elif l_ctc is None:
            total = l_att
        else:
            total = joint_loss(l_att, l_ctc, lam)
        return total, (l_att.item() if l_att is not None else float("nan"),
                       l_ctc.item() if l_ctc is not None else float("nan"))

    # -------------------------------------------------------------- inference

    def ctc_log_probs(self, frames):
        with ag.no_grad():
            H = self.encode(frames)
            return ag.log_softmax(self.ctc_logits(H)).data, H

    def greedy_ctc(self, frames):
        lp, _ = self.ctc_log_probs(frames)
        return ctc_mod.greedy_decode(lp)

    def decode(self, frames, beam=None, lam=None, beta=None, lm=None, max_len=None, n_best=None):
        d = self.cfg.decode
        lp, H = self.ctc_log_probs(frames)
        decoder = AttentionDecoder(H, self.store, self.cfg.model.attention)
        return beam_search(decoder, lp, beam or d.beam, d.lam if lam is None else lam,
                           d.beta if beta is None else beta, lm,
                           max_len or d.max_len, n_best)

    # -------------------------------------------------------------- bookkeeping

    def param_rows(self):
        """``(name, shape, count, formula, component)`` for every parameter."""
        formulas = {name: f for name, _, _, f in param_table(self.cfg.frontend)}
        rows = []
        for name, p in self.store.items():
            comp = "front-end" if name.startswith(FRONTEND_PREFIXES) else "back-end"
            formula = formulas.get(name, "x".join(str(s) for s in p.shape))
            rows.append((name, p.shape, int(p.data.size), formula, comp))
        return rows

    def counts(self):
        front = sum(r[2] for r in self.param_rows() if r[4] == "front-end")
        return front, self.store.count() - front


def frames_for(audio, cfg):
    from .audio_io import frame_signal
    return frame_signal(audio, cfg.audio.frame_ms, cfg.audio.shift_ms)


def center_frequencies(model):
    f1, f2 = model.cfg.frontend.sinc.cutoffs(model.store)
    return np.asarray((f1 + f2) / 2 * model.cfg.audio.sample_rate)


def save_model(path, model, values=None):
    """Write ``model`` (or ``values`` for its architecture) as a checkpoint; returns its sha256."""
    from . import checkpoint
    return checkpoint.save(path, model.store.values() if values is None else values,
                           model.cfg.to_dict(), model.seed)


def load_model(path):
    """Rebuild a :class:`HybridModel` from a checkpoint; returns ``(model, sha256)``."""
    from . import checkpoint
    from .config import RunConfig
    values, config, seed = checkpoint.load(path)
    model = HybridModel(RunConfig.from_dict(config), seed)
    try:
        model.store.load_values(values)
    except (KeyError, ValueError) as exc:
        raise checkpoint.CheckpointSchemaError(f"{path}: {exc}") from exc
    return model, checkpoint.file_hash(path)
