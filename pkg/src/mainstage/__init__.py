"""Mainstage: house-music sub-genre classification toolkit.

End-to-end pipeline: WAV decode -> drop-segment detection -> clip sampling
-> mel/CQT/VQT feature stacks -> overlapping square patches -> transformer
classifier trained with soft-label cross-entropy -> weighted metrics,
embeddings, PCA, and cue-sheet generation for visual automation.
"""

from .app import (CueEvent, CueSheet, cli_dispatch, cuesheet,
                  cuesheet_to_json, default_presets, main, worker_count)
from .audio_io import (CANONICAL_RATE, AudioBuffer, AudioClip,
                       amplitude_to_db, decode_wav, encode_wav)
from .dataset import (ClipRecord, DatasetStats, Genre, GenreProfile, Manifest,
                      N_GENRES, SoftLabel, TABLE1_COUNTS, benchmark_manifest,
                      benchmark_manifest_path, build_manifest, dataset_stats,
                      format_stats, genre_profile, load_manifest, read_tensor,
                      save_manifest, sharpen, write_tensor)
from .errors import (ConfigError, DataError, EmptyAudioError, FormatError,
                     MainstageError, ManifestError, NumericError,
                     UnsupportedCodecError)
from .evaluation import (EmbeddingSet, EvalReport, PCAResult,
                         confusion_from_pairs, embeddings_from_csv,
                         embeddings_to_csv, evaluate, evaluate_tracks,
                         extract_embeddings, pca_project, projection_to_csv,
                         report_from_confusion, report_from_pairs,
                         report_to_json, weighted_f1)
from .features import (Chromagram, FeatureConfig, FeatureStack, PatchSequence,
                       Spectrogram, cqt_chroma, extract_feature_stack,
                       hz_to_mel, mel_filterbank, mel_spectrogram, mel_to_hz,
                       patchify, slice_windows, stack_features,
                       stft_magnitude, vqt_chroma, window_starts)
from .model import (Adam, EpochLog, FeatureStore, ForwardResult, ModelConfig,
                    ModelParams, TrainConfig, Tensor, backward, encode_patch,
                    forward, init_params, load_checkpoint, loss,
                    positional_encoding, predict, save_checkpoint, train)
from .segmentation import (DropSegment, LoudnessEnvelope, SegmentationConfig,
                           detect_drops, loudness_envelope, sample_clips,
                           smooth_envelope)

__version__ = "0.1.0"
