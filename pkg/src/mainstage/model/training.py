"""Deterministic Adam training over manifest clips, plus checkpoints.

Features are read through a store (any callable mapping a ClipRecord to a
list of patch arrays); the bundled FeatureStore reads the binary tensor files
referenced by record.feature_path. All randomness flows from two seeds: the
parameter init seed and the per-epoch shuffle seed, so identical inputs give
bit-identical checkpoints.
"""

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..dataset import Genre, read_tensor, sharpen, write_tensor
from ..errors import ConfigError, DataError
from . import autodiff as ad
from .autodiff import Tensor
from .network import ModelConfig, ModelParams, forward, init_params, loss


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 4
    epochs: int = 5
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    shuffle_seed: int = 0
    label_mode: str = "soft"

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.learning_rate <= 0:
            raise ConfigError("need batch_size >= 1, epochs >= 1, lr > 0")
        if self.label_mode not in ("soft", "hard"):
            raise ConfigError(f"unknown label_mode {self.label_mode!r}")


class FeatureStore:
    """Patch loader backed by a directory of tensor files.

    Each clip's feature_path resolves under root; rank-4 files hold a whole
    patch sequence (M, 3, P, P), rank-3 files a single patch.
    """

    def __init__(self, root):
        self.root = Path(root)

    def __call__(self, record):
        path = self.root / record.feature_path
        if not path.is_file():
            raise DataError(f"missing feature file {path}")
        a = read_tensor(path)
        return [a] if a.ndim == 3 else list(a)


class Adam:
    def __init__(self, params: ModelParams, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}

    def step(self, params: ModelParams):
        c = self.cfg
        self.t += 1
        for name, tens in params.items():
            g = tens.grad
            if g is None:
                g = np.zeros_like(tens.data)
            self.m[name] = c.adam_beta1 * self.m[name] + (1 - c.adam_beta1) * g
            self.v[name] = c.adam_beta2 * self.v[name] + (1 - c.adam_beta2) * g * g
            m_hat = self.m[name] / (1 - c.adam_beta1 ** self.t)
            v_hat = self.v[name] / (1 - c.adam_beta2 ** self.t)
            tens.data = tens.data - c.learning_rate * m_hat / (np.sqrt(v_hat) + c.adam_eps)


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    val_weighted_f1: float        # nan when the manifest has no val split


def zero_grads(params: ModelParams):
    for _, t in params.items():
        t.grad = None


def _target(record, label_mode):
    if label_mode == "hard":
        hot = np.zeros(len(Genre))
        hot[sharpen(record.label)] = 1.0
        return hot
    return record.label.as_array()


def _mean_loss(losses):
    total = losses[0]
    for extra in losses[1:]:
        total = ad.add(total, extra)
    return ad.scale(total, 1.0 / len(losses))


def train(manifest, store, model_cfg: ModelConfig = ModelConfig(),
          train_cfg: TrainConfig = TrainConfig(), init_seed: int = 0,
          params: ModelParams = None, log=None):
    """Fit the classifier; returns (params, [EpochLog per epoch])."""
    from ..evaluation import weighted_f1  # deferred: evaluation imports network

    train_recs = manifest.split("train")
    if not train_recs:
        raise DataError("manifest has no train clips")
    val_recs = manifest.split("val")
    targets = [_target(r, train_cfg.label_mode) for r in train_recs]

    if params is None:
        params = init_params(model_cfg, init_seed)
    opt = Adam(params, train_cfg)
    logs = []
    for epoch in range(train_cfg.epochs):
        rng = np.random.default_rng([train_cfg.shuffle_seed, epoch])
        order = rng.permutation(len(train_recs))
        loss_sum = 0.0
        for lo in range(0, len(order), train_cfg.batch_size):
            chunk = order[lo:lo + train_cfg.batch_size]
            zero_grads(params)
            losses = [loss(forward(store(train_recs[i]), params, model_cfg).logits,
                           targets[i]) for i in chunk]
            batch_loss = _mean_loss(losses)
            ad.backward(batch_loss)
            ad.check_finite_grads(params.items())
            opt.step(params)
            loss_sum += float(batch_loss.data) * len(chunk)

        f1 = float("nan")
        if val_recs:
            pairs = [(sharpen(r.label), predict(store(r), params, model_cfg))
                     for r in val_recs]
            f1 = weighted_f1(pairs)
        entry = EpochLog(epoch=epoch, train_loss=loss_sum / len(order),
                         val_weighted_f1=f1)
        logs.append(entry)
        if log is not None:
            log(entry)
    return params, logs


def predict(patches, params: ModelParams, cfg: ModelConfig) -> Genre:
    """Argmax genre for one clip's patches (lowest index wins ties)."""
    return Genre(int(np.argmax(forward(patches, params, cfg).probs)))


def save_checkpoint(params: ModelParams, cfg: ModelConfig, dirpath):
    """One tensor file per parameter plus a JSON sidecar of config/seed."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    meta = {"config": asdict(cfg), "init_seed": params.init_seed,
            "params": list(params.tensors)}
    (d / "config.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    for name, tens in params.items():
        write_tensor(d / f"{name}.msf", tens.data)


def load_checkpoint(dirpath):
    """Returns (ModelParams, ModelConfig); inverse of save_checkpoint."""
    d = Path(dirpath)
    try:
        meta = json.loads((d / "config.json").read_text())
    except FileNotFoundError as exc:
        raise DataError(f"no checkpoint at {d}") from exc
    raw = dict(meta["config"])
    raw["encoder_channels"] = tuple(raw["encoder_channels"])
    cfg = ModelConfig(**raw)
    tensors = {
        name: Tensor(read_tensor(d / f"{name}.msf").astype(cfg.np_dtype), name=name)
        for name in meta["params"]}
    return ModelParams(tensors=tensors, init_seed=meta["init_seed"]), cfg
