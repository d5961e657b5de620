"""Character tokenizer and the synthesized tone-sequence corpus."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .audio_io import AudioBuffer, read_wav, write_wav


class CharTokenizer:
    """Characters map to ids 1..V; id 0 is reserved (CTC blank / end-of-sequence)."""

    def __init__(self, alphabet):
        if not alphabet:
            raise ValueError("alphabet must be non-empty")
        self.alphabet = alphabet
        self._ids = {ch: i + 1 for i, ch in enumerate(alphabet)}

    @property
    def vocab_size(self):
        return len(self.alphabet)

    def encode(self, text):
        try:
            return [self._ids[ch] for ch in text]
        except KeyError as exc:
            raise ValueError(f"character {exc.args[0]!r} not in alphabet {self.alphabet!r}") from None

    def decode(self, ids):
        return "".join(self.alphabet[i - 1] for i in ids if 0 < i <= len(self.alphabet))


def tone_frequencies(n_tokens, lo_hz=400.0, hi_hz=3200.0):
    """Log-spaced tone per token."""
    return np.geomspace(lo_hz, hi_hz, n_tokens)


def synthesize(text, alphabet, sample_rate=16000, seed=0, noise=0.01, amplitude=0.5,
               token_ms=(90, 130), gap_ms=(30, 50), edge_ms=40):
    """Audio for ``text``: one sine burst per character separated by silence."""
    rng = np.random.default_rng(seed)
    freqs = dict(zip(alphabet, tone_frequencies(len(alphabet))))
    sr = sample_rate
    pieces = [np.zeros(int(edge_ms * sr / 1000))]
    for i, ch in enumerate(text):
        n = int(rng.uniform(*token_ms) * sr / 1000)
        t = np.arange(n) / sr
        ramp = np.minimum(1.0, np.minimum(np.arange(n), np.arange(n)[::-1]) / (0.005 * sr))
        phase = rng.uniform(0, 2 * np.pi)
        pieces.append(amplitude * ramp * np.sin(2 * np.pi * freqs[ch] * t + phase))
        if i < len(text) - 1:
            pieces.append(np.zeros(int(rng.uniform(*gap_ms) * sr / 1000)))
    pieces.append(np.zeros(int(edge_ms * sr / 1000)))
    x = np.concatenate(pieces) + noise * rng.standard_normal(sum(len(p) for p in pieces))
    x = np.round(np.clip(x, -1, 32767 / 32768) * 32768) / 32768  # PCM16-representable
    return AudioBuffer(x, sr)


@dataclass
class Utterance:
    uid: int
    text: str
    audio: AudioBuffer


def toy_corpus(alphabet="abcd", n_utts=20, seed=0, min_len=2, max_len=4, sample_rate=16000):
    rng = np.random.default_rng(seed)
    utts = []
    for uid in range(n_utts):
        n = int(rng.integers(min_len, max_len + 1))
        text = "".join(rng.choice(list(alphabet), size=n))
        utts.append(Utterance(uid, text, synthesize(text, alphabet, sample_rate, seed=seed * 1000 + uid)))
    return utts


def write_corpus(out_dir, utts, alphabet):
    """Write WAVs plus ``corpus.json`` describing them; returns the JSON path."""
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for u in utts:
        name = f"utt{u.uid:03d}.wav"
        write_wav(os.path.join(out_dir, name), u.audio)
        entries.append({"id": u.uid, "wav": name, "text": u.text})
    path = os.path.join(out_dir, "corpus.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"alphabet": alphabet, "utterances": entries}, fh, indent=1)
    return path


def read_corpus(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    alphabet = doc["alphabet"]
    base = os.path.dirname(os.path.abspath(path))
    utts = []
    for e in doc["utterances"]:
        if not e["text"]:
            raise ValueError(f"utterance {e['id']}: empty transcript")
        bad = set(e["text"]) - set(alphabet)
        if bad:
            raise ValueError(f"utterance {e['id']}: characters {sorted(bad)} not in alphabet")
        if "wav" in e:
            audio = read_wav(os.path.join(base, e["wav"]))
        else:
            audio = synthesize(e["text"], alphabet, seed=e.get("seed", e["id"]))
        utts.append(Utterance(e["id"], e["text"], audio))
    return alphabet, utts
