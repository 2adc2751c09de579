"""WAV decoding and loudness helpers.

Everything downstream works on mono float buffers in [-1, 1]. The decoder
hand-parses RIFF/WAVE (PCM 16/24-bit and IEEE float32, mono or stereo) so the
byte-level behavior stays auditable; stereo is downmixed by per-sample mean
and integer PCM is scaled by the type's max magnitude (32768 / 8388608).
No resampling is performed anywhere: the header rate is kept as-is and the
dataset builder rejects anything that is not 44100 Hz.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import EmptyAudioError, FormatError, UnsupportedCodecError

CANONICAL_RATE = 44100

# dB floor: amplitude 0 maps to -200 dB instead of -inf
DB_EPS = 1e-10

_WAVE_PCM = 1
_WAVE_IEEE_FLOAT = 3


@dataclass(frozen=True)
class AudioBuffer:
    """Mono samples in [-1, 1] plus provenance."""

    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class AudioClip:
    """A fixed-length excerpt cut from a source track."""

    buffer: AudioBuffer
    start_s: float
    duration_s: float


def amplitude_to_db(x):
    """20*log10(max(x, eps)); accepts scalars or arrays, x >= 0."""
    return 20.0 * np.log10(np.maximum(x, DB_EPS))


def _read_exact(data, offset, n, what):
    if offset + n > len(data):
        raise FormatError(f"truncated WAV: expected {n} bytes for {what}")
    return data[offset:offset + n]


def decode_wav(data: bytes, source_id: str = "") -> AudioBuffer:
    """Decode a RIFF/WAVE byte string into a mono AudioBuffer.

    Supported: PCM 16-bit, PCM 24-bit, IEEE float32; 1 or 2 channels.
    Raises FormatError on malformed containers, UnsupportedCodecError on
    other encodings and EmptyAudioError when the data chunk is empty.
    """
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError("not a RIFF/WAVE stream")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body_at = pos + 8
        if cid == b"fmt ":
            body = _read_exact(data, body_at, min(size, 16), "fmt chunk")
            if size < 16:
                raise FormatError("fmt chunk shorter than 16 bytes")
            fmt = struct.unpack("<HHIIHH", body)
        elif cid == b"data":
            payload = _read_exact(data, body_at, size, "data chunk")
        # chunks are word-aligned
        pos = body_at + size + (size & 1)

    if fmt is None:
        raise FormatError("missing fmt chunk")
    if payload is None:
        raise FormatError("missing data chunk")

    audio_format, n_channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if sample_rate <= 0:
        raise FormatError(f"invalid sample rate {sample_rate}")
    if n_channels not in (1, 2):
        raise UnsupportedCodecError(f"{n_channels} channels (only mono/stereo)")

    if audio_format == _WAVE_PCM and bits == 16:
        raw = np.frombuffer(payload[:len(payload) - len(payload) % 2], dtype="<i2")
        x = raw.astype(np.float64) / 32768.0
    elif audio_format == _WAVE_PCM and bits == 24:
        usable = len(payload) - len(payload) % 3
        b = np.frombuffer(payload[:usable], dtype=np.uint8).reshape(-1, 3)
        raw = (b[:, 0].astype(np.int32)
               | (b[:, 1].astype(np.int32) << 8)
               | (b[:, 2].astype(np.int32) << 16))
        raw = np.where(raw >= 1 << 23, raw - (1 << 24), raw)
        x = raw.astype(np.float64) / 8388608.0
    elif audio_format == _WAVE_IEEE_FLOAT and bits == 32:
        raw = np.frombuffer(payload[:len(payload) - len(payload) % 4], dtype="<f4")
        x = raw.astype(np.float64)
    else:
        raise UnsupportedCodecError(
            f"format code {audio_format} at {bits} bits not supported")

    if x.size == 0:
        raise EmptyAudioError("WAV data chunk holds no samples")
    if n_channels == 2:
        usable = x.size - x.size % 2
        x = x[:usable].reshape(-1, 2).mean(axis=1)

    if not np.all(np.isfinite(x)):
        raise FormatError("non-finite sample values in float WAV")
    x = np.clip(x, -1.0, 1.0)
    return AudioBuffer(samples=x, sample_rate=sample_rate, source_id=source_id)


def encode_wav(buffer: AudioBuffer, encoding: str = "pcm16") -> bytes:
    """Encode a mono buffer back to WAV bytes.

    Inverse of decode_wav for in-range mono signals: pcm16/pcm24 use the same
    power-of-two scaling, so encode(decode(wav)) reproduces the PCM payload
    bit-exactly.
    """
    x = np.asarray(buffer.samples, dtype=np.float64)
    if encoding == "pcm16":
        raw = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
        payload = raw.tobytes()
        fmt, bits = _WAVE_PCM, 16
    elif encoding == "pcm24":
        raw = np.clip(np.round(x * 8388608.0), -(1 << 23), (1 << 23) - 1).astype(np.int64)
        raw = np.where(raw < 0, raw + (1 << 24), raw).astype(np.uint32)
        b = np.empty((raw.size, 3), dtype=np.uint8)
        b[:, 0] = raw & 0xFF
        b[:, 1] = (raw >> 8) & 0xFF
        b[:, 2] = (raw >> 16) & 0xFF
        payload = b.tobytes()
        fmt, bits = _WAVE_PCM, 24
    elif encoding == "float32":
        payload = x.astype("<f4").tobytes()
        fmt, bits = _WAVE_IEEE_FLOAT, 32
    else:
        raise ValueError(f"unknown encoding {encoding!r}")

    block_align = bits // 8
    byte_rate = buffer.sample_rate * block_align
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, fmt, 1, buffer.sample_rate, byte_rate, block_align, bits,
        b"data", len(payload))
    out = header + payload
    if len(payload) & 1:
        out += b"\x00"
    return out
