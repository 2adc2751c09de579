"""Shared synthesis helpers for the test suite."""

import numpy as np
import pytest

from mainstage import AudioBuffer, AudioClip, LoudnessEnvelope, ModelConfig

SR = 44100


def sine_buffer(freq, duration_s=1.0, amp=0.5, sr=SR, source_id="sine"):
    t = np.arange(int(round(duration_s * sr))) / sr
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t), sr, source_id)


def as_clip(buf, start_s=0.0):
    return AudioClip(buffer=buf, start_s=start_s, duration_s=buf.duration_s)


def make_env(values_db, hop_s=0.025, frame_len_s=0.100):
    return LoudnessEnvelope(values_db=np.asarray(values_db, dtype=np.float64),
                            frame_hop_s=hop_s, frame_len_s=frame_len_s)


def tiny_model_cfg(**overrides):
    """Reduced config for gradient-scale tests: 8x8 patches, D=8."""
    base = dict(embed_dim=8, n_heads=2, n_layers=1, ffn_dim=16,
                encoder_channels=(4, 8), patch_size=8, max_seq_len=8,
                dtype="float64")
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
