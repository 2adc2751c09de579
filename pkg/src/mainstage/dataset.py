"""Label space, soft labels, genre profiles, manifests, and tensor files.

Eight mainstage house sub-genres in a frozen order (the order defines label
vector indices everywhere). Clips carry soft labels — probability
distributions over the sub-genres — because a track can express traits of
several genres at once; `sharpen` collapses a soft label to its argmax genre
for hard-label training and for metric ground truth.

Manifests are JSON-lines, one clip per line, with per-track train/val splits
(all clips of a track share a split, so no track leaks across). Feature
tensors use a small binary container: magic "MSF1", little-endian u32 rank
and dims, then row-major float32 payload.
"""

import enum
import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .audio_io import CANONICAL_RATE
from .errors import DataError, FormatError, ManifestError


class Genre(enum.IntEnum):
    """Sub-genre label space; the member order is the label-vector order."""
    ProgressiveHouse = 0
    FutureHouse = 1
    BassHouse = 2
    TechHouse = 3
    DeepHouse = 4
    Bigroom = 5
    FutureRave = 6
    SlapHouse = 7


N_GENRES = len(Genre)
LABEL_SUM_TOL = 1e-6
SPLITS = ("train", "val")


@dataclass(frozen=True)
class SoftLabel:
    probs: tuple

    @classmethod
    def one_hot(cls, genre: Genre) -> "SoftLabel":
        return cls(tuple(1.0 if g == genre else 0.0 for g in Genre))

    def validate(self):
        if len(self.probs) != N_GENRES:
            raise DataError(f"label has {len(self.probs)} entries, "
                            f"expected {N_GENRES}")
        if any(p < 0 for p in self.probs):
            raise DataError("label has negative entries")
        total = sum(self.probs)
        if abs(total - 1.0) > LABEL_SUM_TOL:
            raise DataError(f"label sums to {total:.6f}, expected 1")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=np.float64)


def sharpen(label: SoftLabel) -> Genre:
    """Argmax genre; ties go to the lowest enumeration index."""
    probs = label.probs
    best = 0
    for i in range(1, len(probs)):
        if probs[i] > probs[best]:
            best = i
    return Genre(best)


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    source_id: str
    start_s: float
    label: SoftLabel
    split: str
    feature_path: str


@dataclass(frozen=True)
class GenreProfile:
    """Annotation determinants: which parts carry dedicated instruments
    (yes/no/uncertain) and 1-5 ranges for groove, rhythm fragmentation,
    distortion, and organic-instrument presence."""
    genre: Genre
    lead_inst: str
    chord_inst: str
    bass_inst: str
    groove: tuple
    rhythm: tuple
    distortion: tuple
    organicity: tuple


_YES, _NO, _UNCERTAIN = "yes", "no", "uncertain"

_PROFILES = {
    Genre.ProgressiveHouse:
        GenreProfile(Genre.ProgressiveHouse, _YES, _YES, _YES,
                     (4, 5), (1, 3), (1, 2), (3, 5)),
    Genre.FutureHouse:
        GenreProfile(Genre.FutureHouse, _YES, _UNCERTAIN, _YES,
                     (3, 4), (4, 5), (3, 4), (1, 3)),
    Genre.BassHouse:
        GenreProfile(Genre.BassHouse, _YES, _NO, _YES,
                     (2, 4), (3, 4), (4, 5), (1, 2)),
    Genre.TechHouse:
        GenreProfile(Genre.TechHouse, _NO, _NO, _YES,
                     (3, 5), (3, 4), (2, 4), (1, 3)),
    Genre.DeepHouse:
        GenreProfile(Genre.DeepHouse, _YES, _UNCERTAIN, _YES,
                     (2, 3), (1, 2), (1, 2), (2, 4)),
    Genre.Bigroom:
        GenreProfile(Genre.Bigroom, _YES, _NO, _NO,
                     (1, 2), (1, 3), (4, 5), (1, 2)),
    Genre.FutureRave:
        GenreProfile(Genre.FutureRave, _YES, _NO, _YES,
                     (4, 5), (3, 5), (2, 4), (1, 2)),
    Genre.SlapHouse:
        GenreProfile(Genre.SlapHouse, _YES, _NO, _YES,
                     (3, 4), (3, 5), (1, 3), (1, 2)),
}


def genre_profile(genre: Genre) -> GenreProfile:
    return _PROFILES[Genre(genre)]


@dataclass(frozen=True)
class Manifest:
    records: tuple

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def split(self, which: str) -> tuple:
        return tuple(r for r in self.records if r.split == which)


def build_manifest(records, sample_rate: int = CANONICAL_RATE,
                   features_root=None) -> Manifest:
    """Validate records into a Manifest.

    Rejects a non-canonical sample rate, duplicate clip_ids, invalid labels,
    unknown splits, and track leakage (one source_id in both splits). When
    features_root is given, every feature_path must exist under it.
    """
    if sample_rate != CANONICAL_RATE:
        raise ManifestError(
            f"sample rate {sample_rate}, expected {CANONICAL_RATE}")
    seen = set()
    track_split = {}
    for rec in records:
        if rec.clip_id in seen:
            raise ManifestError(f"duplicate clip_id {rec.clip_id!r}")
        seen.add(rec.clip_id)
        if rec.split not in SPLITS:
            raise ManifestError(f"unknown split {rec.split!r}")
        rec.label.validate()
        prior = track_split.setdefault(rec.source_id, rec.split)
        if prior != rec.split:
            raise ManifestError(
                f"track {rec.source_id!r} appears in both splits")
        if features_root is not None:
            path = Path(features_root) / rec.feature_path
            if not path.is_file():
                raise ManifestError(f"missing feature file {path}")
    return Manifest(records=tuple(records))


def save_manifest(manifest: Manifest, path):
    lines = []
    for rec in manifest:
        d = asdict(rec)
        d["label"] = list(rec.label.probs)
        lines.append(json.dumps(d, separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + "\n")


def load_manifest(path, features_root=None) -> Manifest:
    records = []
    for i, line in enumerate(Path(path).read_text().splitlines()):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            d["label"] = SoftLabel(tuple(d["label"]))
            records.append(ClipRecord(**d))
        except (ValueError, TypeError, KeyError) as exc:
            raise ManifestError(f"{path}:{i + 1}: bad record ({exc})") from exc
    return build_manifest(records, features_root=features_root)


@dataclass(frozen=True)
class DatasetStats:
    train_counts: dict                # Genre -> clip count
    val_counts: dict
    n_tracks: int

    @property
    def total_train(self):
        return sum(self.train_counts.values())

    @property
    def total_val(self):
        return sum(self.val_counts.values())


def dataset_stats(manifest: Manifest) -> DatasetStats:
    """Per-genre clip counts by split (genre = sharpened label) and the
    number of distinct source tracks."""
    train = {g: 0 for g in Genre}
    val = {g: 0 for g in Genre}
    tracks = set()
    for rec in manifest:
        (train if rec.split == "train" else val)[sharpen(rec.label)] += 1
        tracks.add(rec.source_id)
    return DatasetStats(train_counts=train, val_counts=val,
                        n_tracks=len(tracks))


def format_stats(stats: DatasetStats) -> str:
    width = max(len(g.name) for g in Genre)
    lines = [f"{'Genre':<{width}}  {'Train':>6}  {'Val':>6}"]
    for g in Genre:
        lines.append(f"{g.name:<{width}}  {stats.train_counts[g]:>6}  "
                     f"{stats.val_counts[g]:>6}")
    lines.append(f"{'Total':<{width}}  {stats.total_train:>6}  "
                 f"{stats.total_val:>6}")
    lines.append(f"Tracks: {stats.n_tracks}")
    return "\n".join(lines)


# --- binary tensor container ------------------------------------------------

TENSOR_MAGIC = b"MSF1"
MAX_TENSOR_RANK = 4


def write_tensor(path, array):
    a = np.ascontiguousarray(array, dtype="<f4")
    if a.ndim > MAX_TENSOR_RANK:
        raise FormatError(f"rank {a.ndim} exceeds {MAX_TENSOR_RANK}")
    if not np.all(np.isfinite(a)):
        raise DataError("tensor has non-finite values")
    with open(path, "wb") as f:
        f.write(TENSOR_MAGIC)
        f.write(struct.pack("<I", a.ndim))
        for d in a.shape:
            if d >= 2 ** 32:
                raise FormatError(f"dimension {d} overflows u32")
            f.write(struct.pack("<I", d))
        f.write(a.tobytes())


def read_tensor(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:4] != TENSOR_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    if len(blob) < 8:
        raise FormatError(f"{path}: truncated header")
    rank, = struct.unpack_from("<I", blob, 4)
    if rank > MAX_TENSOR_RANK:
        raise FormatError(f"{path}: rank {rank} exceeds {MAX_TENSOR_RANK}")
    if len(blob) < 8 + 4 * rank:
        raise FormatError(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{rank}I" if rank else "", blob, 8)
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    payload = blob[8 + 4 * rank:]
    if len(payload) != 4 * count:
        raise FormatError(f"{path}: payload holds {len(payload)} bytes, "
                          f"expected {4 * count}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


# --- bundled benchmark fixture ----------------------------------------------

# Published per-genre clip counts (train, val) of the 1,035-track benchmark.
TABLE1_COUNTS = {
    Genre.ProgressiveHouse: (1215, 344),
    Genre.FutureHouse: (1192, 348),
    Genre.BassHouse: (1102, 120),
    Genre.TechHouse: (643, 200),
    Genre.DeepHouse: (591, 116),
    Genre.Bigroom: (774, 284),
    Genre.FutureRave: (920, 108),
    Genre.SlapHouse: (667, 232),
}


def benchmark_manifest() -> Manifest:
    """Synthesize a manifest reproducing the published benchmark statistics.

    The audio itself cannot be redistributed, so clips get one-hot labels and
    placeholder feature paths; only the counts (clips per genre per split,
    1,035 distinct tracks) are meaningful. Deterministic by construction.
    """
    records = []
    for genre in Genre:
        n_train, n_val = TABLE1_COUNTS[genre]
        n_val_tracks = 30 if genre < 3 else 29   # 8*129 + 3 = 1035 tracks
        layout = (("train", n_train, 100, 0), ("val", n_val, n_val_tracks, 100))
        for split, n_clips, n_tracks, first_track in layout:
            for i in range(n_clips):
                track = first_track + i % n_tracks
                clip_id = f"{genre.name}-{split}-{i:04d}"
                records.append(ClipRecord(
                    clip_id=clip_id,
                    source_id=f"{genre.name}-{track:03d}",
                    start_s=30.0 + 7.5 * (i // n_tracks),
                    label=SoftLabel.one_hot(genre),
                    split=split,
                    feature_path=f"features/{clip_id}.msf"))
    return build_manifest(records)


def benchmark_manifest_path() -> Path:
    """Location of the bundled fixture file (see benchmark_manifest)."""
    return Path(__file__).parent / "data" / "benchmark_manifest.jsonl"
