"""Depthwise convolution blocks and the full LSC front-end."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import _make, as_tensor
from .sinc import ConfigurationError, SincFilterBank, activate, sinc_forward


@dataclass(frozen=True)
class DConvBlockConfig:
    in_channels: int
    channel_multiplier: int = 1
    kernel_size: int = 9
    stride: int = 1
    pooling: str = "none"
    activation: str = "logc"
    bias: bool = False

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigurationError(f"DConv kernel size must be odd, got {self.kernel_size}")
        if self.stride < 1 or self.channel_multiplier < 1 or self.in_channels < 1:
            raise ConfigurationError("stride, channel multiplier and in_channels must be >= 1")
        if self.pooling not in ("none", "average"):
            raise ConfigurationError(f"unknown pooling {self.pooling!r}")

    @property
    def out_channels(self):
        return self.channel_multiplier * self.in_channels

    def output_len(self, n_in):
        if n_in < self.kernel_size:
            raise ConfigurationError(
                f"inner length {n_in} shorter than DConv kernel {self.kernel_size}")
        return (n_in - self.kernel_size) // self.stride + 1


def param_count(cfg):
    return cfg.out_channels * cfg.kernel_size + (cfg.out_channels if cfg.bias else 0)


def param_count_full(cfg):
    return cfg.in_channels * cfg.out_channels * cfg.kernel_size


def param_count_pointwise(cfg):
    return cfg.in_channels * cfg.out_channels


def depthwise_conv(x, w, stride=1):
    """Depthwise valid convolution within each frame.

    ``x`` is ``(T, C, N)`` and ``w`` is ``(n*C, k)``; output channel
    ``j = m*C + c`` filters input channel ``c`` with kernel row ``j``.
    """
    x, w = as_tensor(x), as_tensor(w)
    T, C, N = x.shape
    J, k = w.shape
    if J % C:
        raise ConfigurationError(f"kernel rows {J} not a multiple of input channels {C}")
    mult = J // C
    patches = np.lib.stride_tricks.sliding_window_view(x.data, k, axis=2)[:, :, ::stride]
    n_out = patches.shape[2]
    wm = w.data.reshape(mult, C, k)
    out = np.einsum("tcok,mck->tmco", patches, wm, optimize=True).reshape(T, J, n_out)

    def backward(g):
        gm = g.reshape(T, mult, C, n_out)
        gw = np.einsum("tmco,tcok->mck", gm, patches, optimize=True).reshape(J, k)
        gx = None
        if ag._needs_grad(x):
            gp = np.einsum("tmco,mck->ktco", gm, wm, optimize=True)
            gx = np.zeros((T, C, N))
            stop = stride * (n_out - 1) + 1
            for q in range(k):
                gx[:, :, q:q + stop:stride] += gp[q]
        return gx, gw

    return _make(out, (x, w), backward)


def init_dconv(store, name, cfg):
    # Positive kernels summing to ~1 keep the nonnegative logc features at
    # their scale through the stack; symmetric init shrinks them ~2x per block.
    k = cfg.kernel_size
    store.add(f"{name}.weight", store._rng.uniform(0.0, 2.0 / k, size=(cfg.out_channels, k)))
    if cfg.bias:
        store.add_zeros(f"{name}.bias", (cfg.out_channels,))


def dconv_forward(x, cfg, store, name):
    x = as_tensor(x)
    if x.shape[1] != cfg.in_channels:
        raise ConfigurationError(f"{name}: expected {cfg.in_channels} channels, got {x.shape[1]}")
    cfg.output_len(x.shape[2])
    y = depthwise_conv(x, store[f"{name}.weight"], cfg.stride)
    if cfg.bias:
        y = y + ag.reshape(store[f"{name}.bias"], (1, cfg.out_channels, 1))
    y = activate(y, cfg.activation)
    if cfg.pooling == "average":
        y = ag.mean(y, axis=2)
    return y


@dataclass(frozen=True)
class FrontEndConfig:
    sinc: SincFilterBank = field(default_factory=SincFilterBank)
    blocks: tuple = ()
    output_dim: int = 256
    activation: str = "logc"

    def validate(self, frame_len):
        """Check the channel chain and inner lengths; returns per-stage inner lengths."""
        lengths = [self.sinc.output_len(frame_len)]
        channels = self.sinc.num_filters
        for i, b in enumerate(self.blocks):
            if b.in_channels != channels:
                raise ConfigurationError(
                    f"block {i}: in_channels {b.in_channels} != previous output {channels}")
            if b.pooling == "average" and i != len(self.blocks) - 1:
                raise ConfigurationError(f"block {i}: pooling only allowed on the final block")
            lengths.append(b.output_len(lengths[-1]))
            channels = b.out_channels
        if channels != self.output_dim:
            raise ConfigurationError(f"front-end ends with {channels} channels, declared {self.output_dim}")
        return lengths

    def with_activation(self, activation):
        blocks = tuple(DConvBlockConfig(**{**asdict(b), "activation": activation}) for b in self.blocks)
        return FrontEndConfig(self.sinc, blocks, self.output_dim, activation)

    def to_dict(self):
        return {"sinc": asdict(self.sinc), "blocks": [asdict(b) for b in self.blocks],
                "output_dim": self.output_dim, "activation": self.activation}

    @classmethod
    def from_dict(cls, d):
        return cls(SincFilterBank(**d["sinc"]), tuple(DConvBlockConfig(**b) for b in d["blocks"]),
                   d["output_dim"], d.get("activation", "logc"))


def reference_frontend(activation="logc"):
    """128 Sinc filters then five k=15 depthwise blocks ending at 256 channels (~15.6k params)."""
    spec = [(128, 1, 2), (128, 1, 2), (128, 2, 1), (256, 1, 2), (256, 1, 1)]
    blocks = tuple(
        DConvBlockConfig(c, n, 15, s, "average" if i == len(spec) - 1 else "none", activation)
        for i, (c, n, s) in enumerate(spec))
    return FrontEndConfig(SincFilterBank(128, 101, 1), blocks, 256, activation)


def init_frontend(store, cfg, sample_rate=16000, f_min_hz=30.0, f_max_hz=None):
    cfg.sinc.init_params(store, sample_rate, f_min_hz, f_max_hz or sample_rate / 2)
    for i, b in enumerate(cfg.blocks):
        init_dconv(store, f"dconv.{i}", b)


def frontend_forward(frames, cfg, store):
    """Frames ``(T, S)`` -> features ``(T, output_dim)``; frames never mix."""
    frames = frames.frames if hasattr(frames, "frames") else frames
    x = sinc_forward(frames, cfg.sinc, store, cfg.activation)
    for i, b in enumerate(cfg.blocks):
        x = dconv_forward(x, b, store, f"dconv.{i}")
    if x.ndim == 3:
        x = ag.mean(x, axis=2)
    return x


def param_table(cfg):
    """Rows ``(name, shape, count, formula)`` for the front-end."""
    s = cfg.sinc
    rows = [("sinc.w1", (s.num_filters,), s.num_filters, "num_filters"),
            ("sinc.w2", (s.num_filters,), s.num_filters, "num_filters")]
    for i, b in enumerate(cfg.blocks):
        rows.append((f"dconv.{i}.weight", (b.out_channels, b.kernel_size),
                     b.out_channels * b.kernel_size, "c_out*k"))
        if b.bias:
            rows.append((f"dconv.{i}.bias", (b.out_channels,), b.out_channels, "c_out"))
    return rows


def frontend_param_count(cfg):
    return cfg.sinc.param_count() + sum(param_count(b) for b in cfg.blocks)


def pointwise_saving(cfg):
    return sum(param_count_pointwise(b) for b in cfg.blocks)
