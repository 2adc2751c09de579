"""Weighted precision/recall/F1, confusion matrices, embeddings, and PCA.

Metrics run over (truth, prediction) genre pairs in plain Python so they
match a brute-force reference bit for bit: per-class precision/recall/F1
with the 0-on-0/0 convention, aggregated by true-support weighting (weighted
recall therefore equals plain accuracy).

PCA is an in-house power iteration with deflation — enough to reduce D-dim
clip embeddings to 3 coordinates for visualization exports.
"""

import json
from dataclasses import dataclass

import numpy as np

from .dataset import Genre, Manifest, N_GENRES, sharpen
from .errors import DataError
from .model.network import ModelConfig, ModelParams, forward
from .model.training import predict


@dataclass(frozen=True)
class EvalReport:
    precision: dict               # Genre -> float
    recall: dict
    f1: dict
    support: dict                 # Genre -> int (true clips per class)
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    confusion: np.ndarray         # (8, 8) ints, rows = truth, cols = prediction


def confusion_from_pairs(pairs) -> np.ndarray:
    conf = np.zeros((N_GENRES, N_GENRES), dtype=np.int64)
    for truth, pred in pairs:
        conf[int(truth), int(pred)] += 1
    return conf


def report_from_confusion(conf) -> EvalReport:
    conf = np.asarray(conf, dtype=np.int64)
    total = int(conf.sum())
    if total == 0:
        raise DataError("empty confusion matrix")
    precision, recall, f1, support = {}, {}, {}, {}
    for g in Genre:
        tp = int(conf[g, g])
        fp = int(conf[:, g].sum()) - tp
        fn = int(conf[g, :].sum()) - tp
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        precision[g], recall[g] = p, r
        f1[g] = 2 * p * r / (p + r) if p + r else 0.0
        support[g] = tp + fn
    wp = wr = wf = 0.0
    for g in Genre:
        wp += precision[g] * support[g]
        wr += recall[g] * support[g]
        wf += f1[g] * support[g]
    return EvalReport(precision=precision, recall=recall, f1=f1,
                      support=support, weighted_precision=wp / total,
                      weighted_recall=wr / total, weighted_f1=wf / total,
                      confusion=conf)


def report_from_pairs(pairs) -> EvalReport:
    if not pairs:
        raise DataError("no (truth, prediction) pairs")
    return report_from_confusion(confusion_from_pairs(pairs))


def weighted_f1(pairs) -> float:
    return report_from_pairs(pairs).weighted_f1


def evaluate(params: ModelParams, cfg: ModelConfig, manifest, store) -> EvalReport:
    """Clip-level report over a manifest's val split (or explicit records)."""
    records = manifest.split("val") if isinstance(manifest, Manifest) else tuple(manifest)
    if not records:
        raise DataError("nothing to evaluate")
    pairs = [(sharpen(r.label), predict(store(r), params, cfg))
             for r in records]
    return report_from_pairs(pairs)


def evaluate_tracks(params: ModelParams, cfg: ModelConfig, manifest, store) -> EvalReport:
    """Track-level variant: mean clip distribution per track, then argmax."""
    records = manifest.split("val") if isinstance(manifest, Manifest) else tuple(manifest)
    if not records:
        raise DataError("nothing to evaluate")
    probs, labels = {}, {}
    for r in records:
        probs.setdefault(r.source_id, []).append(forward(store(r), params, cfg).probs)
        labels.setdefault(r.source_id, []).append(r.label.as_array())
    pairs = []
    for sid in sorted(probs):
        truth = Genre(int(np.argmax(np.mean(labels[sid], axis=0))))
        pred = Genre(int(np.argmax(np.mean(probs[sid], axis=0))))
        pairs.append((truth, pred))
    return report_from_pairs(pairs)


def report_to_json(report: EvalReport) -> str:
    doc = {
        "per_genre": {
            g.name: {"precision": report.precision[g],
                     "recall": report.recall[g],
                     "f1": report.f1[g],
                     "support": report.support[g]}
            for g in Genre},
        "weighted": {"precision": report.weighted_precision,
                     "recall": report.weighted_recall,
                     "f1": report.weighted_f1},
        "confusion": report.confusion.tolist(),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# --- embeddings ---------------------------------------------------------------

@dataclass(frozen=True)
class EmbeddingSet:
    clip_ids: tuple
    embeddings: np.ndarray        # (N, D)
    truths: tuple                 # Genre per row


def extract_embeddings(params: ModelParams, cfg: ModelConfig, records, store) -> EmbeddingSet:
    """Pre-head position-0 outputs, one D-dim row per clip."""
    records = tuple(records)
    if not records:
        raise DataError("no clips to embed")
    rows = [forward(store(r), params, cfg).readout.data.ravel().astype(np.float64)
            for r in records]
    return EmbeddingSet(clip_ids=tuple(r.clip_id for r in records),
                        embeddings=np.vstack(rows),
                        truths=tuple(sharpen(r.label) for r in records))


def embeddings_to_csv(es: EmbeddingSet) -> str:
    d = es.embeddings.shape[1]
    lines = ["clip_id,truth," + ",".join(f"e{i}" for i in range(d))]
    for cid, truth, row in zip(es.clip_ids, es.truths, es.embeddings):
        lines.append(f"{cid},{truth.name}," + ",".join(repr(v) for v in row))
    return "\n".join(lines) + "\n"


def embeddings_from_csv(text: str) -> EmbeddingSet:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split(",")
    if header[:2] != ["clip_id", "truth"]:
        raise DataError("not an embeddings CSV")
    ids, truths, rows = [], [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        ids.append(parts[0])
        truths.append(Genre[parts[1]])
        rows.append([float(v) for v in parts[2:]])
    return EmbeddingSet(clip_ids=tuple(ids), embeddings=np.asarray(rows),
                        truths=tuple(truths))


# --- PCA ----------------------------------------------------------------------

@dataclass(frozen=True)
class PCAResult:
    projected: np.ndarray         # (N, k_eff)
    components: np.ndarray        # (k_eff, D), orthonormal rows
    explained_variance_ratio: np.ndarray
    rank_deficient: bool


def pca_project(embeddings, k: int = 3, tol: float = 1e-9,
                max_iter: int = 10000) -> PCAResult:
    """Top-k principal directions by power iteration with deflation.

    Components are orthogonalized against earlier ones every iterate; sign
    convention: each component's largest-magnitude coordinate is positive.
    Exactly-zero residual variance stops early (rank_deficient flag).
    """
    x = embeddings.embeddings if isinstance(embeddings, EmbeddingSet) else np.asarray(embeddings, dtype=np.float64)
    n, d = x.shape
    if n <= k:
        raise DataError(f"{n} rows cannot support {k} components")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    total_var = float(np.trace(cov))

    comps, eigs = [], []
    deficient = False
    rng = np.random.default_rng(k)
    for _ in range(min(k, d)):
        if total_var == 0.0:
            deficient = True
            break
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        converged_to_zero = False
        for _ in range(max_iter):
            w = cov @ v
            for c in comps:
                w = w - (w @ c) * c
            norm = np.linalg.norm(w)
            if norm == 0.0:
                converged_to_zero = True
                break
            w /= norm
            done = np.linalg.norm(w - v) < tol
            v = w
            if done:
                break
        if converged_to_zero:
            deficient = True
            break
        i = int(np.argmax(np.abs(v)))
        if v[i] < 0:
            v = -v
        comps.append(v)
        eigs.append(max(float(v @ (cov @ v)), 0.0))
    if len(comps) < k:
        deficient = True

    if not comps:
        return PCAResult(projected=np.zeros((n, 0)),
                         components=np.zeros((0, d)),
                         explained_variance_ratio=np.zeros(0),
                         rank_deficient=True)
    order = np.argsort(-np.asarray(eigs), kind="stable")
    components = np.vstack(comps)[order]
    ratios = np.asarray(eigs)[order] / total_var
    return PCAResult(projected=centered @ components.T,
                     components=components,
                     explained_variance_ratio=ratios,
                     rank_deficient=deficient)


def projection_to_csv(es: EmbeddingSet, result: PCAResult) -> str:
    k = result.projected.shape[1]
    lines = ["clip_id,truth," + ",".join(f"pc{i}" for i in range(k))]
    for cid, truth, row in zip(es.clip_ids, es.truths, result.projected):
        lines.append(f"{cid},{truth.name}," + ",".join(repr(v) for v in row))
    return "\n".join(lines) + "\n"
