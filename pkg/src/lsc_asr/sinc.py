"""Learnable Sinc-convolution filterbank.

Frequencies are normalized (cycles per sample, Nyquist = 0.5); Hz only
appears at the I/O boundary (``mel_initialize``, ``inspect_filters``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor, _make, as_tensor

NYQUIST = 0.5


class DomainError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class SincFilterBank:
    num_filters: int = 128
    kernel_len: int = 101
    stride: int = 1
    min_low: float = 50 / 16000
    min_band: float = 50 / 16000
    name: str = "sinc"

    def __post_init__(self):
        if self.kernel_len < 1 or self.kernel_len % 2 == 0:
            raise ConfigurationError(f"kernel_len must be odd and positive, got {self.kernel_len}")
        if self.num_filters < 1 or self.stride < 1:
            raise ConfigurationError("num_filters and stride must be positive")
        if not 0 < self.min_low < NYQUIST or not 0 < self.min_band < NYQUIST:
            raise ConfigurationError("min_low and min_band must lie in (0, 0.5)")

    def output_len(self, frame_len):
        if frame_len < self.kernel_len:
            raise ConfigurationError(
                f"frame of {frame_len} samples is shorter than the Sinc kernel ({self.kernel_len})")
        return (frame_len - self.kernel_len) // self.stride + 1

    def param_count(self):
        return 2 * self.num_filters

    def init_params(self, store, sample_rate=16000, f_min_hz=30.0, f_max_hz=8000.0):
        w1, w2 = mel_initialize(self, f_min_hz, f_max_hz, sample_rate)
        store.add(f"{self.name}.w1", w1)
        store.add(f"{self.name}.w2", w2)

    def params(self, store):
        return store[f"{self.name}.w1"], store[f"{self.name}.w2"]

    def cutoffs(self, store):
        w1, w2 = self.params(store)
        return cutoffs_from_params(w1.data, w2.data, self)


# ---------------------------------------------------------------- cutoffs

def _cutoffs_and_jacobian(w1, w2, min_low, min_band):
    w1 = np.asarray(w1, dtype=np.float64)
    w2 = np.asarray(w2, dtype=np.float64)
    a1 = np.abs(w1)
    f1 = np.clip(a1, min_low, NYQUIST)
    d = w2 - w1
    band = np.maximum(np.abs(d), min_band)
    raw_f2 = f1 + band
    f2 = np.minimum(raw_f2, NYQUIST)

    df1_dw1 = np.where((a1 > min_low) & (a1 < NYQUIST), np.sign(w1), 0.0)
    dband_dd = np.where(np.abs(d) > min_band, np.sign(d), 0.0)
    open_top = raw_f2 < NYQUIST
    df2_dw1 = np.where(open_top, df1_dw1 - dband_dd, 0.0)
    df2_dw2 = np.where(open_top, dband_dd, 0.0)
    return f1, f2, (df1_dw1, df2_dw1, df2_dw2)


def cutoffs_from_params(w1, w2, bank=None):
    """Band edges ``(f1, f2)`` from raw parameters.

    ``f1 = |w1|`` and ``f2 = |w1| + |w2 - w1|``, with the floors
    ``f1 >= min_low`` and ``f2 - f1 >= min_band`` and the ceiling
    ``f2 <= 0.5``.
    """
    bank = bank or SincFilterBank()
    f1, f2, _ = _cutoffs_and_jacobian(w1, w2, bank.min_low, bank.min_band)
    if np.ndim(f1) == 0:
        return float(f1), float(f2)
    return f1, f2


# ---------------------------------------------------------------- kernels

def tap_positions(L):
    half = (L - 1) // 2
    return np.arange(-half, half + 1, dtype=np.float64)


def hamming(L):
    """``0.54 - 0.46 cos(2 pi m / L)`` for m = 0..L-1; tap m pairs with n = m - (L-1)/2."""
    m = np.arange(L, dtype=np.float64)
    return 0.54 - 0.46 * np.cos(2 * np.pi * m / L)


def _scaled_sinc(f, n):
    # 2 f sinc(2 pi f n) == sin(2 pi f n) / (pi n), with value 2 f at n = 0
    f = np.asarray(f, dtype=np.float64)[..., None]
    safe = np.where(n == 0, 1.0, n)
    return np.where(n == 0, 2 * f, np.sin(2 * np.pi * f * n) / (np.pi * safe))


def raw_kernel(f1, f2, L):
    """Unwindowed band-pass kernel ``2 f2 sinc(2 pi f2 n) - 2 f1 sinc(2 pi f1 n)``."""
    n = tap_positions(L)
    return _scaled_sinc(f2, n) - _scaled_sinc(f1, n)


def build_kernel(f1, f2, L, window=True):
    if L < 1 or L % 2 == 0:
        raise DomainError(f"kernel length must be odd, got {L}")
    if not 0 < f1 <= f2 <= NYQUIST:
        raise DomainError(f"need 0 < f1 <= f2 <= 0.5, got f1={f1}, f2={f2}")
    k = raw_kernel(f1, f2, L)
    return k * hamming(L) if window else k


def sinc_kernels(w1, w2, bank):
    """Differentiable ``(num_filters, L)`` windowed kernels from raw ``(w1, w2)``."""
    w1, w2 = as_tensor(w1), as_tensor(w2)
    L = bank.kernel_len
    n = tap_positions(L)
    win = hamming(L)
    f1, f2, (d1_1, d2_1, d2_2) = _cutoffs_and_jacobian(w1.data, w2.data, bank.min_low, bank.min_band)
    kernels = (_scaled_sinc(f2, n) - _scaled_sinc(f1, n)) * win

    def backward(g):
        # d/df [2 f sinc(2 pi f n)] = 2 cos(2 pi f n)
        gw = g * win
        g_f2 = np.sum(gw * 2 * np.cos(2 * np.pi * f2[:, None] * n), axis=1)
        g_f1 = -np.sum(gw * 2 * np.cos(2 * np.pi * f1[:, None] * n), axis=1)
        return g_f1 * d1_1 + g_f2 * d2_1, g_f2 * d2_2

    return _make(kernels, (w1, w2), backward)


# ---------------------------------------------------------------- convolution

def frame_correlate(frames, kernels, stride=1):
    """Valid correlation of each frame with each kernel.

    ``frames`` is ``(T, S)``, ``kernels`` is ``(F, L)``; the result is
    ``(T, F, (S - L) // stride + 1)``.
    """
    x, k = as_tensor(frames), as_tensor(kernels)
    T, S = x.shape
    F, L = k.shape
    if S < L:
        raise ConfigurationError(f"frame length {S} < kernel length {L}")
    patches = np.lib.stride_tricks.sliding_window_view(x.data, L, axis=1)[:, ::stride]
    n_out = patches.shape[1]
    out = (patches.reshape(-1, L) @ k.data.T).reshape(T, n_out, F).transpose(0, 2, 1)

    def backward(g):
        gt = g.transpose(0, 2, 1).reshape(-1, F)
        gk = gt.T @ patches.reshape(-1, L)
        gx = None
        if ag._needs_grad(x):
            gp = np.ascontiguousarray((gt @ k.data).reshape(T, n_out, L).transpose(2, 0, 1))
            gx = np.zeros((T, S))
            stop = stride * (n_out - 1) + 1
            for j in range(L):
                gx[:, j:j + stop:stride] += gp[j]
        return gx, gk

    return _make(np.ascontiguousarray(out), (x, k), backward)


def activate(x, activation):
    if activation == "logc":
        return ag.logc(x)
    if activation == "relu":
        return ag.relu(x)
    if activation in (None, "none", "identity"):
        return x
    raise ConfigurationError(f"unknown activation {activation!r}")


def logc(x):
    """Scalar/array log-compression ``log(|x| + 1)``."""
    return np.log1p(np.abs(x))


def sinc_forward(frames, bank, store, activation="logc"):
    """SincBlock: ``(T, S)`` frames -> ``(T, num_filters, T_inner)`` feature map."""
    frames = frames.frames if hasattr(frames, "frames") else frames
    bank.output_len(np.shape(frames)[-1])
    w1, w2 = bank.params(store)
    k = sinc_kernels(w1, w2, bank)
    return activate(frame_correlate(frames, k, bank.stride), activation)


# ---------------------------------------------------------------- mel init

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_initialize(bank, f_min_hz=30.0, f_max_hz=8000.0, sample_rate=16000):
    """Raw ``(w1, w2)`` placing filter i between mel points i and i+1."""
    if not 0 <= f_min_hz < f_max_hz <= sample_rate / 2:
        raise DomainError(f"need 0 <= f_min < f_max <= {sample_rate / 2}, got {f_min_hz}, {f_max_hz}")
    mels = np.linspace(hz_to_mel(f_min_hz), hz_to_mel(f_max_hz), bank.num_filters + 1)
    edges = mel_to_hz(mels) / sample_rate
    return edges[:-1].copy(), edges[1:].copy()


def inspect_filters(bank, store, sample_rate=16000):
    """Per-filter band table sorted by center frequency.

    Returns a list of dicts with keys ``index, f1_hz, f2_hz, center_hz,
    bandwidth_hz, amplitude``; amplitude is the peak absolute value of the
    windowed kernel.
    """
    f1, f2 = bank.cutoffs(store)
    rows = []
    for i in range(bank.num_filters):
        lo, hi = float(f1[i]), float(f2[i])
        amp = float(np.max(np.abs(raw_kernel(lo, hi, bank.kernel_len) * hamming(bank.kernel_len))))
        rows.append({
            "index": i,
            "f1_hz": lo * sample_rate,
            "f2_hz": hi * sample_rate,
            "center_hz": (lo + hi) / 2 * sample_rate,
            "bandwidth_hz": (hi - lo) * sample_rate,
            "amplitude": amp,
        })
    rows.sort(key=lambda r: (r["center_hz"], r["index"]))
    return rows


def magnitude_response(kernel, n_fft=1024):
    """``(freqs, |DFT|)`` on the non-negative normalized frequency grid."""
    spec = np.abs(np.fft.rfft(kernel, n=n_fft))
    return np.fft.rfftfreq(n_fft), spec


def mel_triangle(freqs, f_lo, f_hi):
    """Triangular mel-style response peaking at the band center (for plots)."""
    c = 0.5 * (f_lo + f_hi)
    up = (freqs - f_lo) / max(c - f_lo, 1e-12)
    down = (f_hi - freqs) / max(f_hi - c, 1e-12)
    return np.clip(np.minimum(up, down), 0.0, 1.0)


__all__ = [
    "SincFilterBank", "Tensor", "cutoffs_from_params", "build_kernel", "sinc_kernels",
    "frame_correlate", "sinc_forward", "logc", "mel_initialize", "inspect_filters",
    "hz_to_mel", "mel_to_hz", "hamming",
]
