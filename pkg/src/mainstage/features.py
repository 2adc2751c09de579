"""Spectral features: mel spectrogram, CQT/VQT chromagrams, 3-channel stack.

Each clip becomes a 3 x 224 x T matrix (channels: mel, cqt-chroma,
vqt-chroma; every channel dB-scaled then min-max normalized per clip) which
is then cut into a sequence of overlapping 3 x 224 x 224 patches for the
classifier.

The constant-Q analysis is evaluated directly (one Hann-windowed complex
kernel per log-spaced bin, correlated at the STFT frame centers) instead of
the FFT kernel trick; at clip scale this is affordable and keeps every number
traceable. The variable-Q path generalizes the bin bandwidth to
B_k = alpha*f_k + gamma, and gamma = 0 degenerates to the constant-Q case
through the exact same code path.
"""

from dataclasses import dataclass, field

import numpy as np

from .audio_io import AudioClip, amplitude_to_db
from .errors import ConfigError, DataError

FEATURE_ROWS = 224
N_CHROMA = 12


@dataclass(frozen=True)
class FeatureConfig:
    n_fft: int = 2048
    stft_hop: int = 512
    n_mels: int = 224
    mel_fmin_hz: float = 20.0
    mel_fmax_hz: float = 20000.0
    cqt_fmin_hz: float = 32.703       # C1
    bins_per_octave: int = 12
    n_octaves: int = 7
    # ERB-flavored default offset: 228.7 * (2^(1/12) - 1)
    vqt_gamma_hz: float = 228.7 * (2.0 ** (1.0 / 12.0) - 1.0)
    patch_width_frames: int = 224
    patch_hop_frames: int = 112


@dataclass(frozen=True)
class Spectrogram:
    data: np.ndarray                  # (bins, frames)
    bin_freqs_hz: np.ndarray
    frame_hop_samples: int


@dataclass(frozen=True)
class Chromagram:
    data: np.ndarray                  # (12, frames), pitch classes C..B
    frame_hop_samples: int


@dataclass(frozen=True)
class FeatureStack:
    data: np.ndarray                  # (3, 224, frames) in [0, 1]
    frame_hop_samples: int


@dataclass(frozen=True)
class PatchSequence:
    patches: list                     # M arrays, each (3, 224, 224)
    starts: list                      # frame offset of each patch window
    patch_hop_frames: int

    def __len__(self):
        return len(self.patches)


def _hann(n):
    # periodic Hann, the STFT convention
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft_magnitude(clip: AudioClip, cfg: FeatureConfig = FeatureConfig()) -> Spectrogram:
    """Centered magnitude STFT; T = floor(len/hop) + 1 frames."""
    x = np.asarray(clip.buffer.samples, dtype=np.float64)
    n_fft, hop = cfg.n_fft, cfg.stft_hop
    if len(x) < n_fft:
        raise DataError(f"clip of {len(x)} samples shorter than n_fft={n_fft}")
    pad = n_fft // 2
    xp = np.pad(x, pad, mode="reflect")
    n_frames = len(x) // hop + 1
    window = _hann(n_fft)
    idx = np.arange(n_fft)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = xp[idx] * window
    mag = np.abs(np.fft.rfft(frames, axis=1)).T
    freqs = np.arange(n_fft // 2 + 1) * clip.buffer.sample_rate / n_fft
    return Spectrogram(data=mag, bin_freqs_hz=freqs, frame_hop_samples=hop)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: FeatureConfig, sample_rate: int) -> np.ndarray:
    """Triangular peak-1 filters, centers equally spaced on the mel scale.

    Returns an (n_mels, n_fft/2+1) matrix. Adjacent triangles are
    complementary, so the rows sum to one everywhere strictly between the
    first and last center frequencies.
    """
    if not (0 <= cfg.mel_fmin_hz < cfg.mel_fmax_hz <= sample_rate / 2):
        raise ConfigError("need 0 <= fmin < fmax <= Nyquist")
    n_bins = cfg.n_fft // 2 + 1
    fft_freqs = np.arange(n_bins) * sample_rate / cfg.n_fft
    # n_mels + 2 grid points: edges at fmin/fmax, centers in between
    grid = mel_to_hz(np.linspace(hz_to_mel(cfg.mel_fmin_hz),
                                 hz_to_mel(cfg.mel_fmax_hz), cfg.n_mels + 2))
    fb = np.zeros((cfg.n_mels, n_bins))
    for r in range(cfg.n_mels):
        left, center, right = grid[r], grid[r + 1], grid[r + 2]
        up = (fft_freqs - left) / (center - left)
        down = (right - fft_freqs) / (right - center)
        fb[r] = np.maximum(0.0, np.minimum(up, down))
        if not np.any(fb[r] > 0):
            raise ConfigError(
                f"mel filter {r} spans no FFT bin; lower n_mels or raise n_fft")
    return fb


def mel_spectrogram(spec: Spectrogram, fb: np.ndarray) -> Spectrogram:
    """Apply the filterbank to power and convert to dB (20*log10 of sqrt)."""
    if fb.shape[1] != spec.data.shape[0]:
        raise DataError(f"filterbank expects {fb.shape[1]} bins, "
                        f"spectrogram has {spec.data.shape[0]}")
    power = fb @ (spec.data ** 2)
    return Spectrogram(data=amplitude_to_db(np.sqrt(power)),
                       bin_freqs_hz=np.zeros(fb.shape[0]),
                       frame_hop_samples=spec.frame_hop_samples)


def _vq_kernels(cfg: FeatureConfig, sample_rate: int, gamma: float):
    """One Hann-windowed complex kernel per bin, bandwidth alpha*f + gamma.

    Kernels are normalized by the window sum so bins of different lengths
    respond comparably to a unit sine at their center frequency.
    """
    alpha = 2.0 ** (1.0 / cfg.bins_per_octave) - 1.0
    n_bins = cfg.bins_per_octave * cfg.n_octaves
    kernels = []
    for k in range(n_bins):
        f_k = cfg.cqt_fmin_hz * 2.0 ** (k / cfg.bins_per_octave)
        if f_k >= sample_rate / 2:
            raise ConfigError(f"bin {k} at {f_k:.1f} Hz reaches Nyquist")
        b_k = alpha * f_k + gamma
        q_k = f_k / b_k
        n_k = int(round(q_k * sample_rate / f_k))
        w = _hann(n_k)
        t = np.arange(n_k) - (n_k - 1) / 2.0
        kern = w * np.exp(-2j * np.pi * f_k * t / sample_rate) / np.sum(w)
        kernels.append(kern)
    return kernels


def _vq_chroma(clip: AudioClip, cfg: FeatureConfig, gamma: float) -> Chromagram:
    x = np.asarray(clip.buffer.samples, dtype=np.float64)
    sr = clip.buffer.sample_rate
    hop = cfg.stft_hop
    kernels = _vq_kernels(cfg, sr, gamma)
    n_max = max(len(k) for k in kernels)
    pad = (n_max + 1) // 2
    if pad > len(x) - 1:
        raise ConfigError(
            f"longest kernel ({n_max} samples) exceeds padded clip length")
    xp = np.pad(x, pad, mode="reflect")
    n_frames = len(x) // hop + 1
    centers = hop * np.arange(n_frames) + pad

    chroma = np.zeros((N_CHROMA, n_frames))
    windows_cache = {}
    for k, kern in enumerate(kernels):
        n_k = len(kern)
        if n_k not in windows_cache:
            view = np.lib.stride_tricks.sliding_window_view(xp, n_k)
            windows_cache[n_k] = view[centers - n_k // 2]
        chroma[k % N_CHROMA] += np.abs(windows_cache[n_k] @ kern)
    return Chromagram(data=chroma, frame_hop_samples=hop)


def cqt_chroma(clip: AudioClip, cfg: FeatureConfig = FeatureConfig()) -> Chromagram:
    """Constant-Q chromagram: log-spaced bins folded by pitch class."""
    return _vq_chroma(clip, cfg, gamma=0.0)


def vqt_chroma(clip: AudioClip, cfg: FeatureConfig = FeatureConfig()) -> Chromagram:
    """Variable-Q chromagram; cfg.vqt_gamma_hz = 0 reproduces cqt_chroma."""
    return _vq_chroma(clip, cfg, gamma=cfg.vqt_gamma_hz)


def _row_interp_matrix(n_src: int, n_dst: int) -> np.ndarray:
    """Linear interpolation of row index; identity when n_src == n_dst."""
    w = np.zeros((n_dst, n_src))
    if n_src == 1:
        w[:, 0] = 1.0
        return w
    pos = np.arange(n_dst) * (n_src - 1) / (n_dst - 1)
    lo = np.minimum(pos.astype(int), n_src - 2)
    frac = pos - lo
    w[np.arange(n_dst), lo] = 1.0 - frac
    w[np.arange(n_dst), lo + 1] = frac
    return w


def _minmax01(a: np.ndarray) -> np.ndarray:
    lo, hi = a.min(), a.max()
    if hi <= lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def stack_features(mel: Spectrogram, cqt: Chromagram, vqt: Chromagram,
                   cfg: FeatureConfig = FeatureConfig()) -> FeatureStack:
    """Stack (mel, cqt, vqt) into 3 x 224 x T.

    The mel channel arrives in dB already; chroma magnitudes are dB-scaled
    here. Every channel is stretched to 224 rows by linear interpolation and
    min-max normalized to [0, 1] over the clip (a constant channel maps to
    zeros).
    """
    t = mel.data.shape[1]
    if cqt.data.shape[1] != t or vqt.data.shape[1] != t:
        raise DataError("mel/cqt/vqt frame counts differ")
    channels = []
    for src in (mel.data, amplitude_to_db(cqt.data), amplitude_to_db(vqt.data)):
        stretched = _row_interp_matrix(src.shape[0], FEATURE_ROWS) @ src
        channels.append(_minmax01(stretched))
    return FeatureStack(data=np.stack(channels),
                        frame_hop_samples=mel.frame_hop_samples)


def window_starts(total: int, width: int, hop: int) -> list:
    """Left-aligned window starts plus a final right-aligned one.

    Covers [0, total) whenever total >= width; callers pad shorter inputs.
    """
    starts = list(range(0, total - width + 1, hop))
    if starts[-1] != total - width:
        starts.append(total - width)
    return starts


def slice_windows(data: np.ndarray, width: int, hop: int):
    """Cut (C, H, T) along time into (C, H, width) windows.

    If T < width the single window is right-padded by edge replication.
    Returns (windows, starts).
    """
    t = data.shape[-1]
    if t < width:
        padded = np.concatenate(
            [data, np.repeat(data[..., -1:], width - t, axis=-1)], axis=-1)
        return [padded], [0]
    starts = window_starts(t, width, hop)
    return [data[..., s:s + width] for s in starts], starts


def patchify(stack: FeatureStack, cfg: FeatureConfig = FeatureConfig()) -> PatchSequence:
    """Slice the stack into M overlapping square patches.

    For T >= 224: starts at 0, h, 2h, ... plus a right-aligned window, giving
    M = ceil((T - 224) / h) + 1. For T < 224 a single edge-padded patch.
    """
    width = cfg.patch_width_frames
    patches, starts = slice_windows(stack.data, width, cfg.patch_hop_frames)
    return PatchSequence(patches=patches, starts=starts,
                         patch_hop_frames=cfg.patch_hop_frames)


def extract_feature_stack(clip: AudioClip, cfg: FeatureConfig = FeatureConfig()) -> FeatureStack:
    """Full per-clip feature pipeline: STFT -> mel, CQT, VQT -> stack."""
    spec = stft_magnitude(clip, cfg)
    fb = mel_filterbank(cfg, clip.buffer.sample_rate)
    mel = mel_spectrogram(spec, fb)
    return stack_features(mel, cqt_chroma(clip, cfg), vqt_chroma(clip, cfg), cfg)
