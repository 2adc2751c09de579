"""Drop detection: find the sustained-loudness climax of a track.

A track's drop is located by thresholding a smoothed RMS loudness envelope at
v_thres = v_max - v_margin and keeping every maximal run of frames at or above
the threshold. Runs separated by less than merge_gap_s are bridged, runs
shorter than one clip are dropped, and fixed-length clips are then sampled
uniformly from each surviving segment with a deterministic per-(seed, track,
segment) generator.

Frame timing convention: frame i covers samples [i*hop, i*hop + frame_len);
for segment boundaries each frame stands for the hop-length slice starting at
i*frame_hop_s, so a run of frames [a, b] becomes the segment
[a*hop_s, (b+1)*hop_s].
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .audio_io import AudioBuffer, AudioClip, amplitude_to_db
from .errors import DataError, EmptyAudioError


@dataclass(frozen=True)
class SegmentationConfig:
    v_margin_db: float = 1.5        # drop threshold sits this far below the peak
    frame_len_s: float = 0.100
    frame_hop_s: float = 0.025
    smooth_window_s: float = 1.0
    merge_gap_s: float = 0.5
    clip_len_s: float = 7.5         # about 4 bars at house tempo
    max_clips_per_segment: int = 8
    rng_seed: int = 0


@dataclass(frozen=True)
class LoudnessEnvelope:
    values_db: np.ndarray
    frame_hop_s: float
    frame_len_s: float

    def __len__(self):
        return len(self.values_db)


@dataclass(frozen=True)
class DropSegment:
    start_s: float
    end_s: float

    @property
    def length_s(self) -> float:
        return self.end_s - self.start_s


def loudness_envelope(audio: AudioBuffer, cfg: SegmentationConfig = SegmentationConfig()) -> LoudnessEnvelope:
    """Per-frame RMS loudness in dB. The tail frame is zero-padded."""
    x = np.asarray(audio.samples, dtype=np.float64)
    sr = audio.sample_rate
    flen = int(round(cfg.frame_len_s * sr))
    hop = int(round(cfg.frame_hop_s * sr))
    if len(x) < flen:
        raise EmptyAudioError(
            f"audio of {len(x)} samples is shorter than one {flen}-sample frame")

    n_frames = (len(x) + hop - 1) // hop
    sq = np.concatenate([x * x, np.zeros(flen)])
    csum = np.concatenate([[0.0], np.cumsum(sq)])
    starts = np.arange(n_frames) * hop
    energy = csum[starts + flen] - csum[starts]
    rms = np.sqrt(energy / flen)
    return LoudnessEnvelope(values_db=amplitude_to_db(rms),
                            frame_hop_s=cfg.frame_hop_s,
                            frame_len_s=cfg.frame_len_s)


def smooth_envelope(env: LoudnessEnvelope, cfg: SegmentationConfig = SegmentationConfig()) -> LoudnessEnvelope:
    """Centered moving average; the window shrinks at the edges."""
    v = np.asarray(env.values_db, dtype=np.float64)
    if len(v) == 0:
        raise EmptyAudioError("empty envelope")
    w = int(cfg.smooth_window_s / env.frame_hop_s)
    if w % 2 == 0:
        w += 1
    w = max(w, 1)
    r = w // 2

    csum = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(len(v))
    lo = np.maximum(idx - r, 0)
    hi = np.minimum(idx + r + 1, len(v))
    out = (csum[hi] - csum[lo]) / (hi - lo)
    return LoudnessEnvelope(values_db=out, frame_hop_s=env.frame_hop_s,
                            frame_len_s=env.frame_len_s)


def detect_drops(env_smoothed: LoudnessEnvelope, cfg: SegmentationConfig = SegmentationConfig()) -> list:
    """Threshold the (already smoothed) envelope and return drop segments.

    Ties at exactly v_thres count as above. Runs separated by less than
    merge_gap_s are merged, then anything shorter than clip_len_s is dropped.
    """
    v = np.asarray(env_smoothed.values_db, dtype=np.float64)
    if len(v) == 0:
        raise EmptyAudioError("empty envelope")
    hop = env_smoothed.frame_hop_s
    v_thres = np.max(v) - cfg.v_margin_db

    above = (v >= v_thres).astype(np.int8)
    starts = np.flatnonzero(np.diff(np.concatenate([[0], above])) == 1)
    ends = np.flatnonzero(np.diff(np.concatenate([above, [0]])) == -1)

    runs = []
    for a, b in zip(starts, ends):
        if runs and (a - (runs[-1][1] + 1)) * hop < cfg.merge_gap_s:
            runs[-1] = (runs[-1][0], b)
        else:
            runs.append((a, b))

    segments = []
    for a, b in runs:
        n_frames = b - a + 1
        if n_frames * hop >= cfg.clip_len_s:
            segments.append(DropSegment(start_s=a * hop, end_s=(b + 1) * hop))
    return segments


def _clip_rng(cfg: SegmentationConfig, source_id: str, segment_index: int):
    digest = hashlib.sha256(source_id.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(
        np.random.SeedSequence([cfg.rng_seed & 0xFFFFFFFF, *words, segment_index]))


def sample_clips(audio: AudioBuffer, segments, cfg: SegmentationConfig = SegmentationConfig()) -> list:
    """Randomly place k = min(cap, floor(len/clip)+1) clips inside each segment.

    The generator is seeded from (rng_seed, source_id, segment index), so a
    fixed seed reproduces byte-identical clip boundaries on any platform.
    """
    sr = audio.sample_rate
    n_clip = int(round(cfg.clip_len_s * sr))
    clips = []
    for seg_idx, seg in enumerate(segments):
        if seg.length_s < cfg.clip_len_s:
            raise DataError(
                f"segment {seg_idx} of {seg.length_s:.3f}s is shorter than "
                f"clip length {cfg.clip_len_s}s")
        k = min(cfg.max_clips_per_segment, int(seg.length_s / cfg.clip_len_s) + 1)
        rng = _clip_rng(cfg, audio.source_id, seg_idx)
        lo, hi = seg.start_s, seg.end_s - cfg.clip_len_s
        for _ in range(k):
            start_s = float(rng.uniform(lo, hi)) if hi > lo else lo
            s0 = int(round(start_s * sr))
            piece = audio.samples[s0:s0 + n_clip]
            if len(piece) < n_clip:  # envelope may overhang the track by < 1 frame
                piece = np.concatenate([piece, np.zeros(n_clip - len(piece))])
            clips.append(AudioClip(
                buffer=AudioBuffer(samples=piece, sample_rate=sr,
                                   source_id=audio.source_id),
                start_s=start_s, duration_s=cfg.clip_len_s))
    return clips
