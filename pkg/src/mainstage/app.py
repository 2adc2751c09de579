"""Cue-sheet generation and the command-line surface.

A cue sheet turns a whole track into a timeline of genre events for
rule-based visual automation: fixed-length analysis windows slide over the
track, each window is classified, and consecutive windows with the same
argmax genre merge into one event carrying the mean distribution and a
preset id for the renderer.

The `mainstage` command exposes the pipeline stages as subcommands
(analyze, clips, extract, dataset-build, dataset-stats, train, eval, embed,
pca, cuesheet). Exit codes: 0 success, 1 usage, 2 data error, 3 numeric
error. MAINSTAGE_THREADS caps worker parallelism (0 = one per CPU).
"""

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import AudioBuffer, AudioClip, decode_wav, encode_wav
from .dataset import (ClipRecord, Genre, SoftLabel, build_manifest,
                      dataset_stats, format_stats, load_manifest,
                      save_manifest, write_tensor)
from .errors import ConfigError, DataError, NumericError
from .evaluation import (embeddings_from_csv, embeddings_to_csv, evaluate,
                         extract_embeddings, pca_project, projection_to_csv,
                         report_to_json)
from .features import FeatureConfig, extract_feature_stack, patchify
from .model.network import ModelConfig, forward
from .model.training import (FeatureStore, TrainConfig, load_checkpoint,
                             save_checkpoint, train)
from .segmentation import (SegmentationConfig, detect_drops,
                           loudness_envelope, sample_clips, smooth_envelope)


def worker_count() -> int:
    """Parallelism cap from MAINSTAGE_THREADS; 0 or unset means one per CPU."""
    raw = os.environ.get("MAINSTAGE_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MAINSTAGE_THREADS={raw!r} is not an integer")
    if n < 0:
        raise ConfigError(f"MAINSTAGE_THREADS={n} is negative")
    return n if n > 0 else (os.cpu_count() or 1)


# --- cue sheets ---------------------------------------------------------------

@dataclass(frozen=True)
class CueEvent:
    start_s: float
    end_s: float
    genre: Genre
    confidence: float
    distribution: tuple           # full 8-genre mean distribution
    preset_id: str


@dataclass(frozen=True)
class CueSheet:
    source_id: str
    events: tuple


def default_presets() -> dict:
    return {g: g.name.lower() for g in Genre}


def _check_presets(presets):
    if presets is None:
        return default_presets()
    missing = [g.name for g in Genre if g not in presets]
    if missing:
        raise ConfigError(f"preset map missing {', '.join(missing)}")
    return presets


def cuesheet(track: AudioBuffer, params, model_cfg: ModelConfig,
             feature_cfg: FeatureConfig = FeatureConfig(),
             window_s: float = 7.5, hop_s: float = 7.5,
             presets=None) -> CueSheet:
    """Classify sliding windows over the whole track and merge equal runs."""
    presets = _check_presets(presets)
    sr = track.sample_rate
    duration = track.duration_s
    if duration < window_s:
        raise DataError(f"track of {duration:.2f}s shorter than "
                        f"{window_s}s analysis window")
    starts = []
    t = 0.0
    while t + window_s <= duration + 1e-9:
        starts.append(t)
        t += hop_s

    def classify(start):
        lo = int(round(start * sr))
        samples = track.samples[lo:lo + int(round(window_s * sr))]
        clip = AudioClip(buffer=AudioBuffer(samples, sr, track.source_id),
                         start_s=start, duration_s=window_s)
        stack = extract_feature_stack(clip, feature_cfg)
        return forward(patchify(stack, feature_cfg), params, model_cfg).probs

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        probs = list(pool.map(classify, starts))
    labels = [Genre(int(np.argmax(p))) for p in probs]

    runs = []                     # (label, first window index, last index)
    for i, label in enumerate(labels):
        if runs and runs[-1][0] == label:
            runs[-1] = (label, runs[-1][1], i)
        else:
            runs.append((label, i, i))

    events = []
    for label, first, last in runs:
        end = starts[last + 1] if last + 1 < len(starts) else starts[last] + window_s
        mean = np.mean(probs[first:last + 1], axis=0)
        events.append(CueEvent(
            start_s=starts[first], end_s=end, genre=label,
            confidence=float(mean.max()),
            distribution=tuple(float(x) for x in mean),
            preset_id=presets[label]))
    return CueSheet(source_id=track.source_id, events=tuple(events))


def cuesheet_to_json(sheet: CueSheet) -> str:
    doc = {"source_id": sheet.source_id,
           "events": [{"start_s": e.start_s, "end_s": e.end_s,
                       "genre": e.genre.name, "confidence": e.confidence,
                       "distribution": list(e.distribution),
                       "preset_id": e.preset_id} for e in sheet.events]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# --- CLI ----------------------------------------------------------------------

class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _write(path, text):
    Path(path).write_text(text)


def _write_json(path, doc):
    _write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_track(path) -> AudioBuffer:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return decode_wav(blob, source_id=Path(path).stem)


def _seg_config(args) -> SegmentationConfig:
    return SegmentationConfig(
        v_margin_db=args.margin_db, frame_len_s=args.frame_len,
        frame_hop_s=args.frame_hop, smooth_window_s=args.smooth_window,
        merge_gap_s=args.merge_gap, clip_len_s=args.clip_len,
        max_clips_per_segment=args.max_clips, rng_seed=args.seed)


def _feature_config(args) -> FeatureConfig:
    return FeatureConfig(n_fft=args.n_fft, stft_hop=args.hop,
                         n_mels=args.n_mels, vqt_gamma_hz=args.gamma,
                         patch_hop_frames=args.patch_hop)


def _add_seg_flags(p):
    p.add_argument("--margin-db", type=float, default=1.5)
    p.add_argument("--frame-len", type=float, default=0.100)
    p.add_argument("--frame-hop", type=float, default=0.025)
    p.add_argument("--smooth-window", type=float, default=1.0)
    p.add_argument("--merge-gap", type=float, default=0.5)
    p.add_argument("--clip-len", type=float, default=7.5)
    p.add_argument("--max-clips", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)


def _add_feature_flags(p):
    p.add_argument("--n-fft", type=int, default=2048)
    p.add_argument("--hop", type=int, default=512)
    p.add_argument("--n-mels", type=int, default=224)
    p.add_argument("--gamma", type=float,
                   default=FeatureConfig().vqt_gamma_hz)
    p.add_argument("--patch-hop", type=int, default=112)


def _add_model_flags(p):
    p.add_argument("--embed-dim", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--ffn-dim", type=int, default=128)
    p.add_argument("--encoder-channels", default="16,32,64")
    p.add_argument("--patch-size", type=int, default=224)
    p.add_argument("--max-seq-len", type=int, default=64)


def _model_config(args) -> ModelConfig:
    try:
        channels = tuple(int(c) for c in args.encoder_channels.split(","))
    except ValueError:
        raise ConfigError(
            f"--encoder-channels {args.encoder_channels!r} is not a "
            f"comma-separated integer list")
    return ModelConfig(embed_dim=args.embed_dim, n_heads=args.heads,
                       n_layers=args.layers, ffn_dim=args.ffn_dim,
                       encoder_channels=channels, patch_size=args.patch_size,
                       max_seq_len=args.max_seq_len)


def _store(args, manifest_path) -> FeatureStore:
    root = args.features_root or Path(manifest_path).parent
    return FeatureStore(root)


def _cmd_analyze(args):
    track = _load_track(args.infile)
    cfg = _seg_config(args)
    smoothed = smooth_envelope(loudness_envelope(track, cfg), cfg)
    v_max = float(np.max(smoothed.values_db))
    segments = detect_drops(smoothed, cfg)
    _write_json(args.out, [
        {"source_id": track.source_id, "start_s": s.start_s, "end_s": s.end_s,
         "v_max_db": v_max, "v_thres_db": v_max - cfg.v_margin_db}
        for s in segments])
    print(f"{len(segments)} drop segment(s) -> {args.out}")


def _cmd_clips(args):
    track = _load_track(args.infile)
    cfg = _seg_config(args)
    segments = detect_drops(smooth_envelope(loudness_envelope(track, cfg), cfg), cfg)
    clips = sample_clips(track, segments, cfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = []
    for i, clip in enumerate(clips):
        name = f"{track.source_id}-clip{i:03d}.wav"
        (out_dir / name).write_bytes(encode_wav(clip.buffer, args.encoding))
        index.append({"file": name, "start_s": clip.start_s,
                      "duration_s": clip.duration_s})
    _write_json(out_dir / "clips.json", {"source_id": track.source_id,
                                         "clips": index})
    print(f"{len(clips)} clip(s) -> {out_dir}")


def _cmd_extract(args):
    track = _load_track(args.infile)
    cfg = _feature_config(args)
    clip = AudioClip(buffer=track, start_s=0.0, duration_s=track.duration_s)
    patches = patchify(extract_feature_stack(clip, cfg), cfg)
    write_tensor(args.out, np.stack(patches.patches))
    print(f"{len(patches)} patch(es) -> {args.out}")


def _cmd_dataset_build(args):
    try:
        raw = json.loads(Path(args.records).read_text())
    except OSError as exc:
        raise DataError(f"cannot read {args.records}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{args.records}: not JSON ({exc})") from exc
    try:
        records = [ClipRecord(clip_id=d["clip_id"], source_id=d["source_id"],
                              start_s=float(d["start_s"]),
                              label=SoftLabel(tuple(d["label"])),
                              split=d["split"],
                              feature_path=d["feature_path"]) for d in raw]
    except (KeyError, TypeError) as exc:
        raise DataError(f"{args.records}: bad record ({exc})") from exc
    manifest = build_manifest(records, sample_rate=args.sample_rate,
                              features_root=args.features_root)
    save_manifest(manifest, args.out)
    print(f"{len(manifest)} record(s) -> {args.out}")


def _cmd_dataset_stats(args):
    stats = dataset_stats(load_manifest(args.manifest))
    print(format_stats(stats))
    if args.out:
        _write_json(args.out, {
            "train": {g.name: stats.train_counts[g] for g in Genre},
            "val": {g.name: stats.val_counts[g] for g in Genre},
            "total_train": stats.total_train, "total_val": stats.total_val,
            "tracks": stats.n_tracks})


def _cmd_train(args):
    manifest = load_manifest(args.manifest)
    model_cfg = _model_config(args)
    train_cfg = TrainConfig(
        batch_size=args.batch_size, epochs=args.epochs,
        learning_rate=args.lr, label_mode=args.label_mode,
        shuffle_seed=args.shuffle_seed if args.shuffle_seed is not None else args.seed)
    init_seed = args.init_seed if args.init_seed is not None else args.seed

    def show(entry):
        print(f"epoch {entry.epoch}: train_loss={entry.train_loss:.4f} "
              f"val_weighted_f1={entry.val_weighted_f1:.4f}")

    params, _ = train(manifest, _store(args, args.manifest), model_cfg,
                      train_cfg, init_seed=init_seed, log=show)
    save_checkpoint(params, model_cfg, args.out)
    print(f"checkpoint -> {args.out}")


def _cmd_eval(args):
    params, model_cfg = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.manifest)
    records = manifest.records if args.split == "all" else manifest.split(args.split)
    report = evaluate(params, model_cfg, records, _store(args, args.manifest))
    if args.out:
        _write(args.out, report_to_json(report))
    print(f"weighted precision={report.weighted_precision:.4f} "
          f"recall={report.weighted_recall:.4f} f1={report.weighted_f1:.4f}")


def _cmd_embed(args):
    params, model_cfg = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.manifest)
    records = manifest.records if args.split == "all" else manifest.split(args.split)
    es = extract_embeddings(params, model_cfg, records, _store(args, args.manifest))
    _write(args.out, embeddings_to_csv(es))
    print(f"{len(es.clip_ids)} embedding(s) -> {args.out}")


def _cmd_pca(args):
    try:
        es = embeddings_from_csv(Path(args.embeddings).read_text())
    except OSError as exc:
        raise DataError(f"cannot read {args.embeddings}: {exc}") from exc
    result = pca_project(es, k=args.k)
    _write(args.out, projection_to_csv(es, result))
    ratios = ", ".join(f"{r:.6f}" for r in result.explained_variance_ratio)
    print(f"explained variance ratios: {ratios}")
    if result.rank_deficient:
        print("warning: rank-deficient input, fewer components than requested")


def _cmd_cuesheet(args):
    track = _load_track(args.infile)
    params, model_cfg = load_checkpoint(args.checkpoint)
    sheet = cuesheet(track, params, model_cfg, _feature_config(args),
                     window_s=args.window, hop_s=args.hop_s)
    _write(args.out, cuesheet_to_json(sheet))
    print(f"{len(sheet.events)} event(s) -> {args.out}")


def build_parser() -> _Parser:
    parser = _Parser(prog="mainstage",
                     description="House-music sub-genre analysis toolkit")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("analyze", help="detect drop segments in a track")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    _add_seg_flags(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("clips", help="sample training clips from the drops")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--encoding", choices=("pcm16", "pcm24", "float32"),
                   default="float32")
    _add_seg_flags(p)
    p.set_defaults(func=_cmd_clips)

    p = sub.add_parser("extract", help="clip WAV -> patch tensor file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    _add_feature_flags(p)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("dataset-build", help="validate records into a manifest")
    p.add_argument("--records", required=True,
                   help="JSON list of clip records")
    p.add_argument("--out", required=True)
    p.add_argument("--sample-rate", type=int, default=44100)
    p.add_argument("--features-root", default=None,
                   help="verify feature files exist under this directory")
    p.set_defaults(func=_cmd_dataset_build)

    p = sub.add_parser("dataset-stats", help="per-genre clip counts")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_dataset_stats)

    p = sub.add_parser("train", help="fit the classifier on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features-root", default=None)
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--label-mode", choices=("soft", "hard"), default="soft")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shuffle-seed", type=int, default=None)
    p.add_argument("--init-seed", type=int, default=None)
    _add_model_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="weighted metrics for a checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features-root", default=None)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "all"), default="val")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("embed", help="export pre-head embeddings as CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features-root", default=None)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "all"), default="train")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("pca", help="project an embeddings CSV to k dims")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=3)
    p.set_defaults(func=_cmd_pca)

    p = sub.add_parser("cuesheet", help="genre event timeline for a track")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=float, default=7.5)
    p.add_argument("--hop-s", type=float, default=7.5)
    _add_feature_flags(p)
    p.set_defaults(func=_cmd_cuesheet)

    return parser


def cli_dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
        return 0
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        print("run 'mainstage --help' for usage", file=sys.stderr)
        return 1
    except SystemExit as exc:          # argparse --help
        return 0 if exc.code in (0, None) else int(exc.code)
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_dispatch(sys.argv[1:]))
