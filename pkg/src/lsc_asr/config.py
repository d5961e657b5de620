"""Run configuration: nested dataclasses with strict JSON loading."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .attention import AttentionConfig
from .augment import AugmentPolicy
from .dconv import DConvBlockConfig, FrontEndConfig, reference_frontend
from .sinc import SincFilterBank


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AudioConfig:
    sample_rate: int = 16000
    frame_ms: float = 25.0
    shift_ms: float = 10.0

    @property
    def frame_len(self):
        return int(round(self.frame_ms * self.sample_rate / 1000))


@dataclass(frozen=True)
class MelInit:
    f_min_hz: float = 30.0
    f_max_hz: float = 8000.0


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int = 4
    encoder_layers: tuple = ((64, 64), (64, 64))
    attention: AttentionConfig = field(default_factory=AttentionConfig)


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "sgd"
    lr: float = 0.05
    momentum: float = 0.9
    epochs: int = 300
    seed: int = 0
    lam: float = 0.5
    clip_norm: float = 5.0
    sinc_lr_scale: float = 1.0
    augment: bool = False
    stop_at_accuracy: float = 2.0  # > 1 never stops early


@dataclass(frozen=True)
class DecodeConfig:
    beam: int = 4
    lam: float = 0.4
    beta: float = 0.5
    max_len: int = 50


@dataclass(frozen=True)
class RunConfig:
    audio: AudioConfig = field(default_factory=AudioConfig)
    frontend: FrontEndConfig = field(default_factory=reference_frontend)
    mel: MelInit = field(default_factory=MelInit)
    model: ModelConfig = field(default_factory=ModelConfig)
    augment: AugmentPolicy = field(default_factory=AugmentPolicy)
    train: TrainConfig = field(default_factory=TrainConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    alphabet: str = "abcd"

    def validate(self):
        nyq = self.audio.sample_rate / 2
        if self.mel.f_max_hz > nyq:
            raise ConfigError(f"mel.f_max_hz={self.mel.f_max_hz} exceeds Nyquist {nyq}")
        if not 0 <= self.mel.f_min_hz < self.mel.f_max_hz:
            raise ConfigError("mel.f_min_hz must lie in [0, f_max_hz)")
        if not self.audio.frame_ms >= self.audio.shift_ms > 0:
            raise ConfigError("audio: need frame_ms >= shift_ms > 0")
        if self.frontend.sinc.kernel_len > self.audio.frame_len:
            raise ConfigError(f"frontend.sinc.kernel_len={self.frontend.sinc.kernel_len} exceeds "
                              f"frame length {self.audio.frame_len} samples")
        for name, lam in (("train.lam", self.train.lam), ("decode.lam", self.decode.lam)):
            if not 0.0 <= lam <= 1.0:
                raise ConfigError(f"{name}={lam} outside [0, 1]")
        if self.train.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"train.optimizer={self.train.optimizer!r}; expected 'sgd' or 'adam'")
        if self.decode.beam < 1:
            raise ConfigError("decode.beam must be >= 1")
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ConfigError("alphabet has duplicate characters")
        try:
            self.frontend.validate(self.audio.frame_len)
        except ValueError as exc:
            raise ConfigError(f"frontend: {exc}") from exc
        return self

    def to_dict(self):
        d = asdict(self)
        d["frontend"] = self.frontend.to_dict()
        d["model"]["encoder_layers"] = [list(x) for x in self.model.encoder_layers]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        _reject_unknown(d, cls, "")
        kw = {}
        for section, typ in (("audio", AudioConfig), ("mel", MelInit), ("augment", AugmentPolicy),
                             ("train", TrainConfig), ("decode", DecodeConfig)):
            if section in d:
                _reject_unknown(d[section], typ, section + ".")
                kw[section] = typ(**d[section])
        if "model" in d:
            m = dict(d["model"])
            _reject_unknown(m, ModelConfig, "model.")
            if "attention" in m:
                _reject_unknown(m["attention"], AttentionConfig, "model.attention.")
                m["attention"] = AttentionConfig(**m["attention"])
            if "encoder_layers" in m:
                m["encoder_layers"] = tuple(tuple(x) for x in m["encoder_layers"])
            kw["model"] = ModelConfig(**m)
        if "frontend" in d:
            f = d["frontend"]
            _reject_unknown(f, FrontEndConfig, "frontend.")
            _reject_unknown(f.get("sinc", {}), SincFilterBank, "frontend.sinc.")
            for i, b in enumerate(f.get("blocks", [])):
                _reject_unknown(b, DConvBlockConfig, f"frontend.blocks[{i}].")
            kw["frontend"] = FrontEndConfig.from_dict(
                {"sinc": {}, "blocks": [], "output_dim": 256, **f})
        if "alphabet" in d:
            kw["alphabet"] = d["alphabet"]
        try:
            cfg = cls(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cfg.validate()


def _reject_unknown(d, typ, prefix):
    if not isinstance(d, dict):
        raise ConfigError(f"{prefix or 'config'} must be a mapping")
    known = {f.name for f in fields(typ)}
    for key in d:
        if key not in known:
            raise ConfigError(f"unknown config key {prefix}{key!r}")


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        try:
            return RunConfig.from_dict(json.load(fh))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def save_config(path, cfg):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def toy_frontend(activation="logc"):
    """Small front-end for the synthesized tone corpus."""
    blocks = (
        DConvBlockConfig(16, 1, 9, 2, "none", activation),
        DConvBlockConfig(16, 1, 9, 2, "none", activation),
        DConvBlockConfig(16, 2, 5, 1, "none", activation),
        DConvBlockConfig(32, 1, 5, 1, "none", activation),
        DConvBlockConfig(32, 1, 5, 1, "average", activation),
    )
    return FrontEndConfig(SincFilterBank(16, 65, 4), blocks, 32, activation)


TOY_TRAIN = {"lr": 0.05, "momentum": 0.9, "clip_norm": 1.0, "sinc_lr_scale": 0.02}


def toy_config(activation="logc", augment=False, lam=0.5, seed=0, epochs=300, **train_kw):
    """Settings for the synthesized tone corpus; ``train_kw`` overrides :data:`TOY_TRAIN`."""
    train_kw = {**TOY_TRAIN, **train_kw}
    return RunConfig(
        frontend=toy_frontend(activation),
        model=ModelConfig(vocab_size=4, encoder_layers=((32, 32),),
                          attention=AttentionConfig(d_att=32, k_loc=5, c_loc=4, d_dec=32, d_emb=16)),
        augment=AugmentPolicy(num_time_masks=1, max_time_mask=4, num_channel_masks=1,
                              max_channel_mask=4, warp_window=2, seed=seed),
        train=TrainConfig(lam=lam, seed=seed, epochs=epochs, augment=augment, **train_kw),
        decode=DecodeConfig(beam=4, lam=0.4, beta=0.5, max_len=12),
        alphabet="abcd",
    ).validate()


def full_scale_config():
    """Reference front-end plus the full-size back-end sizes (parameter accounting only)."""
    return RunConfig(model=ModelConfig(
        vocab_size=500, encoder_layers=((512, 512),) * 4,
        attention=AttentionConfig(d_att=512, k_loc=201, c_loc=10, d_dec=512, d_emb=512)))
