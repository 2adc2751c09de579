import numpy as np
import pytest

from mainstage import (AudioBuffer, EmptyAudioError, FormatError,
                       UnsupportedCodecError, amplitude_to_db, decode_wav,
                       encode_wav)
from conftest import SR, sine_buffer


def wav_bytes(samples, sr=SR, encoding="pcm16"):
    return encode_wav(AudioBuffer(np.asarray(samples, dtype=np.float64), sr, "t"),
                      encoding)


def test_amplitude_to_db_values():
    assert amplitude_to_db(1.0) == 0.0
    assert amplitude_to_db(0.5) == pytest.approx(-6.020599913279624, abs=1e-12)
    assert amplitude_to_db(0.0) == -200.0


def test_amplitude_to_db_monotone(rng):
    x = np.sort(rng.uniform(0, 2, size=200))
    y = amplitude_to_db(x)
    assert np.all(np.diff(y) >= 0)


def test_pcm16_scaling():
    # raw 16-bit payload {0, 16384, -32768} -> {0.0, 0.5, -1.0}
    buf = decode_wav(wav_bytes([0.0, 0.5, -1.0]))
    assert np.allclose(buf.samples, [0.0, 0.5, -1.0])
    assert buf.sample_rate == SR


def test_stereo_mean_downmix():
    # hand-assemble a stereo float32 file: L=0.5, R=-0.5
    import struct
    n = 16
    payload = b"".join(struct.pack("<ff", 0.5, -0.5) for _ in range(n))
    header = (b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
              + b"fmt " + struct.pack("<IHHIIHH", 16, 3, 2, SR, SR * 8, 8, 32)
              + b"data" + struct.pack("<I", len(payload)))
    buf = decode_wav(header + payload)
    assert np.all(buf.samples == 0.0)
    assert len(buf.samples) == n


def test_downmix_is_linear():
    import struct
    def stereo(l, r, scale):
        payload = b"".join(struct.pack("<ff", scale * l, scale * r)
                           for _ in range(8))
        header = (b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
                  + b"fmt " + struct.pack("<IHHIIHH", 16, 3, 2, SR, SR * 8, 8, 32)
                  + b"data" + struct.pack("<I", len(payload)))
        return decode_wav(header + payload).samples
    one = stereo(0.5, 0.25, 1.0)
    half = stereo(0.5, 0.25, 0.5)
    assert np.allclose(half, 0.5 * one)


def test_sine_roundtrip_error_bound():
    buf = sine_buffer(440, amp=0.9)
    back = decode_wav(encode_wav(buf, "pcm16"))
    assert np.abs(back.samples - buf.samples).max() <= 2.0 ** -15


@pytest.mark.parametrize("encoding", ["pcm16", "pcm24", "float32"])
def test_payload_roundtrip_bit_exact(encoding, rng):
    x = rng.uniform(-1, 1, size=500)
    blob = wav_bytes(x, encoding=encoding)
    again = encode_wav(decode_wav(blob), encoding)
    assert blob == again


def test_bad_magic_rejected():
    blob = bytearray(wav_bytes([0.1, 0.2]))
    blob[:4] = b"XXXX"
    with pytest.raises(FormatError):
        decode_wav(bytes(blob))


def test_unsupported_codec_rejected():
    import struct
    # mu-law format tag 7
    header = (b"RIFF" + struct.pack("<I", 36 + 4) + b"WAVE"
              + b"fmt " + struct.pack("<IHHIIHH", 16, 7, 1, SR, SR, 1, 8)
              + b"data" + struct.pack("<I", 4) + b"\x00" * 4)
    with pytest.raises(UnsupportedCodecError):
        decode_wav(header)


def test_zero_length_rejected():
    import struct
    header = (b"RIFF" + struct.pack("<I", 36) + b"WAVE"
              + b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, SR, SR * 2, 2, 16)
              + b"data" + struct.pack("<I", 0))
    with pytest.raises(EmptyAudioError):
        decode_wav(header)


def test_decode_clamps_to_unit_range():
    import struct
    payload = struct.pack("<ff", 1.5, -2.0)
    header = (b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
              + b"fmt " + struct.pack("<IHHIIHH", 16, 3, 1, SR, SR * 4, 4, 32)
              + b"data" + struct.pack("<I", len(payload)))
    buf = decode_wav(header + payload)
    assert np.all(np.abs(buf.samples) <= 1.0)
