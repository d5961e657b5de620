"""PCM16 WAV reading/writing and fixed-size framing of raw audio."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np


class WavFormatError(ValueError):
    """Malformed RIFF/WAVE structure."""


class UnsupportedFormatError(WavFormatError):
    """Well-formed WAV that is not 16-bit PCM mono."""


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate_hz: int = 16000

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate_hz <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(s)):
            raise ValueError("audio samples must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return len(self.samples)

    @property
    def duration_s(self):
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class FrameMatrix:
    frames: np.ndarray
    frame_len_samples: int
    hop_samples: int

    @property
    def num_frames(self):
        return self.frames.shape[0]


def read_wav(path):
    with open(path, "rb") as fh:
        return parse_wav(fh.read())


def parse_wav(data: bytes) -> AudioBuffer:
    """Parse RIFF/WAVE bytes holding PCM16 mono audio."""
    if len(data) < 12:
        raise WavFormatError(f"byte 0: file too short for a RIFF header ({len(data)} bytes)")
    if data[0:4] != b"RIFF":
        raise WavFormatError(f"byte 0: expected 'RIFF', found {data[0:4]!r}")
    if data[8:12] != b"WAVE":
        raise WavFormatError(f"byte 8: expected 'WAVE', found {data[8:12]!r}")
    pos = 12
    fmt = None
    pcm = None
    while pos < len(data):
        if pos + 8 > len(data):
            raise WavFormatError(f"byte {pos}: truncated chunk header")
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if body + size > len(data):
            raise WavFormatError(f"byte {pos + 4}: chunk {cid!r} claims {size} bytes, "
                                 f"only {len(data) - body} remain")
        if cid == b"fmt ":
            if size < 16:
                raise WavFormatError(f"byte {pos + 4}: fmt chunk too short ({size} bytes)")
            fmt = (body, struct.unpack_from("<HHIIHH", data, body))
        elif cid == b"data":
            pcm = (body, data[body:body + size])
        pos = body + size + (size & 1)
    if fmt is None:
        raise WavFormatError(f"byte {len(data)}: no 'fmt ' chunk found")
    if pcm is None:
        raise WavFormatError(f"byte {len(data)}: no 'data' chunk found")
    off, (audio_format, channels, rate, _, _, bits) = fmt
    if audio_format != 1:
        raise UnsupportedFormatError(f"byte {off}: audio_format={audio_format}, only PCM (1) supported")
    if channels != 1:
        raise UnsupportedFormatError(f"byte {off + 2}: num_channels={channels}, only mono supported")
    if bits != 16:
        raise UnsupportedFormatError(f"byte {off + 14}: bits_per_sample={bits}, only 16 supported")
    if rate == 0:
        raise WavFormatError(f"byte {off + 4}: sample_rate=0")
    doff, raw = pcm
    if len(raw) % 2:
        raise WavFormatError(f"byte {doff}: data chunk has odd length {len(raw)}")
    ints = np.frombuffer(raw, dtype="<i2")
    return AudioBuffer(ints.astype(np.float64) / 32768.0, rate)


def encode_wav(samples_int16, sample_rate_hz=16000) -> bytes:
    pcm = np.asarray(samples_int16, dtype="<i2").tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(pcm)) + b"WAVE"
    fmt = b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, sample_rate_hz, 2 * sample_rate_hz, 2, 16)
    return header + fmt + b"data" + struct.pack("<I", len(pcm)) + pcm


def write_wav(path, audio: AudioBuffer):
    ints = np.clip(np.round(np.asarray(audio.samples) * 32768.0), -32768, 32767).astype("<i2")
    with open(path, "wb") as fh:
        fh.write(encode_wav(ints, audio.sample_rate_hz))


def frame_signal(audio: AudioBuffer, frame_ms=25.0, shift_ms=10.0) -> FrameMatrix:
    """Cut ``audio`` into overlapping frames; the trailing partial frame is dropped."""
    if not frame_ms >= shift_ms > 0:
        raise ValueError(f"need frame_ms >= shift_ms > 0, got {frame_ms}, {shift_ms}")
    size = int(round(frame_ms * audio.sample_rate_hz / 1000))
    hop = int(round(shift_ms * audio.sample_rate_hz / 1000))
    x = np.asarray(audio.samples)
    n = len(x)
    count = (n - size) // hop + 1 if n >= size else 0
    if count == 0:
        return FrameMatrix(np.zeros((0, size)), size, hop)
    idx = np.arange(count)[:, None] * hop + np.arange(size)[None, :]
    return FrameMatrix(x[idx], size, hop)
