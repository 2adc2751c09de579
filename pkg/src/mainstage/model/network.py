"""Patch encoder + transformer classifier over patch sequences.

Each 3 x P x P patch runs through a small convolutional encoder (3x3 conv,
rectify, 2x2 pool per stage, then global average pooling and a linear map)
into a D-dim embedding. A learnable class token is prepended, sinusoidal
positional encodings are added, and a stack of pre-norm transformer encoder
layers mixes the sequence. The class token's output (position 0) feeds a
linear head over the 8 genres.

The objective is cross-entropy against a soft target distribution,
L = -sum_y p(y) log q(y) — equivalently KL(p || q) up to the constant
entropy of p — computed through a log-sum-exp-stabilized log-softmax.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..dataset import N_GENRES, SoftLabel
from ..errors import ConfigError, DataError, NumericError
from . import autodiff as ad
from .autodiff import Tensor

LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 64
    n_heads: int = 4
    n_layers: int = 2
    ffn_dim: int = 128
    n_classes: int = N_GENRES
    encoder_channels: tuple = (16, 32, 64)
    use_class_token: bool = True
    max_seq_len: int = 64
    patch_size: int = 224
    dtype: str = "float32"       # float64 exists for gradient checking

    def __post_init__(self):
        if self.embed_dim % self.n_heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible "
                              f"by n_heads {self.n_heads}")
        if self.n_classes != N_GENRES:
            raise ConfigError(f"n_classes must be {N_GENRES}")
        if self.patch_size % (2 ** len(self.encoder_channels)):
            raise ConfigError(
                f"patch_size {self.patch_size} not divisible by "
                f"2^{len(self.encoder_channels)} for the pooling stages")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unknown dtype {self.dtype!r}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class ModelParams:
    tensors: dict                 # name -> Tensor, fixed insertion order
    init_seed: int

    def __getitem__(self, name):
        return self.tensors[name]

    def items(self):
        return self.tensors.items()


def init_params(cfg: ModelConfig, init_seed: int = 0) -> ModelParams:
    """Deterministic initialization: uniform +-1/sqrt(fan_in) weights, zero
    biases and norm offsets, unit norm scales, small-normal class token."""
    rng = np.random.default_rng(init_seed)
    d = cfg.embed_dim
    t = {}

    def uniform(shape, fan_in):
        lim = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-lim, lim, size=shape)

    c_in = 3
    for i, c_out in enumerate(cfg.encoder_channels):
        t[f"encoder.conv{i}.w"] = uniform((c_out, c_in, 3, 3), c_in * 9)
        t[f"encoder.conv{i}.b"] = np.zeros(c_out)
        c_in = c_out
    t["encoder.proj.w"] = uniform((c_in, d), c_in)
    t["encoder.proj.b"] = np.zeros((1, d))
    if cfg.use_class_token:
        t["cls_token"] = rng.normal(0.0, 0.02, size=(1, d))
    for i in range(cfg.n_layers):
        pre = f"layer{i}"
        t[f"{pre}.ln1.g"] = np.ones((1, d))
        t[f"{pre}.ln1.b"] = np.zeros((1, d))
        for proj in ("wq", "wk", "wv", "wo"):
            t[f"{pre}.attn.{proj}"] = uniform((d, d), d)
            t[f"{pre}.attn.b{proj[1]}"] = np.zeros((1, d))
        t[f"{pre}.ln2.g"] = np.ones((1, d))
        t[f"{pre}.ln2.b"] = np.zeros((1, d))
        t[f"{pre}.ffn.w1"] = uniform((d, cfg.ffn_dim), d)
        t[f"{pre}.ffn.b1"] = np.zeros((1, cfg.ffn_dim))
        t[f"{pre}.ffn.w2"] = uniform((cfg.ffn_dim, d), cfg.ffn_dim)
        t[f"{pre}.ffn.b2"] = np.zeros((1, d))
    t["head.w"] = uniform((d, cfg.n_classes), d)
    t["head.b"] = np.zeros((1, cfg.n_classes))

    dt = cfg.np_dtype
    return ModelParams(
        tensors={k: Tensor(v.astype(dt), name=k) for k, v in t.items()},
        init_seed=init_seed)


def positional_encoding(seq_len: int, d: int, max_seq_len=None) -> np.ndarray:
    """Sinusoidal table: PE(pos, 2i) = sin(pos / 10000^(2i/d)), cos at 2i+1."""
    if max_seq_len is not None and seq_len > max_seq_len:
        raise DataError(f"sequence of {seq_len} exceeds max {max_seq_len}")
    pos = np.arange(seq_len, dtype=np.float64)[:, None]
    angles = pos / (10000.0 ** (np.arange(0, d, 2) / d))
    pe = np.zeros((seq_len, d))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : d // 2])
    return pe


def _linear(x, w, b):
    return ad.add(ad.matmul(x, w), b)


def _layer_norm(x, g, b):
    m = ad.mean_rows(x)
    centered = ad.sub(x, m)
    var = ad.mean_rows(ad.mul(centered, centered))
    return ad.add(ad.mul(ad.div(centered, ad.sqrt(ad.add_const(var, LN_EPS))),
                         g), b)


def encode_patch(patch, params: ModelParams, cfg: ModelConfig) -> Tensor:
    """Embed one 3 x P x P patch to a (1, D) tensor."""
    arr = np.asarray(patch, dtype=cfg.np_dtype)
    expect = (3, cfg.patch_size, cfg.patch_size)
    if arr.shape != expect:
        raise DataError(f"patch shape {arr.shape}, expected {expect}")
    x = Tensor(arr)
    for i in range(len(cfg.encoder_channels)):
        x = ad.maxpool2(ad.relu(ad.conv3x3(
            x, params[f"encoder.conv{i}.w"], params[f"encoder.conv{i}.b"])))
    pooled = ad.global_avg_pool(x)
    return _linear(pooled, params["encoder.proj.w"], params["encoder.proj.b"])


def _attention(x, params, pre, cfg):
    p = params
    q = _linear(x, p[f"{pre}.attn.wq"], p[f"{pre}.attn.bq"])
    k = _linear(x, p[f"{pre}.attn.wk"], p[f"{pre}.attn.bk"])
    v = _linear(x, p[f"{pre}.attn.wv"], p[f"{pre}.attn.bv"])
    dh = cfg.embed_dim // cfg.n_heads
    heads = []
    for h in range(cfg.n_heads):
        lo, hi = h * dh, (h + 1) * dh
        scores = ad.scale(
            ad.matmul(ad.slice_cols(q, lo, hi),
                      ad.transpose(ad.slice_cols(k, lo, hi))),
            1.0 / math.sqrt(dh))
        heads.append(ad.matmul(ad.softmax_rows(scores),
                               ad.slice_cols(v, lo, hi)))
    cat = heads[0] if len(heads) == 1 else ad.concat_cols(heads)
    return _linear(cat, p[f"{pre}.attn.wo"], p[f"{pre}.attn.bo"])


def _ffn(x, params, pre):
    h = ad.relu(_linear(x, params[f"{pre}.ffn.w1"], params[f"{pre}.ffn.b1"]))
    return _linear(h, params[f"{pre}.ffn.w2"], params[f"{pre}.ffn.b2"])


@dataclass
class ForwardResult:
    logits: Tensor                # (1, 8)
    readout: Tensor               # (1, D) pre-head position-0 output
    probs: np.ndarray             # softmax(logits), float64


def forward(patches, params: ModelParams, cfg: ModelConfig) -> ForwardResult:
    """Classify a patch sequence (a PatchSequence or iterable of arrays)."""
    plist = list(getattr(patches, "patches", patches))
    budget = cfg.max_seq_len - (1 if cfg.use_class_token else 0)
    if not 1 <= len(plist) <= budget:
        raise DataError(f"{len(plist)} patches outside [1, {budget}]")

    rows = [params["cls_token"]] if cfg.use_class_token else []
    rows += [encode_patch(p, params, cfg) for p in plist]
    seq = rows[0] if len(rows) == 1 else ad.concat_rows(rows)
    pe = positional_encoding(seq.data.shape[0], cfg.embed_dim, cfg.max_seq_len)
    x = ad.add(seq, Tensor(pe.astype(cfg.np_dtype)))
    for i in range(cfg.n_layers):
        pre = f"layer{i}"
        normed = _layer_norm(x, params[f"{pre}.ln1.g"], params[f"{pre}.ln1.b"])
        x = ad.add(x, _attention(normed, params, pre, cfg))
        normed = _layer_norm(x, params[f"{pre}.ln2.g"], params[f"{pre}.ln2.b"])
        x = ad.add(x, _ffn(normed, params, pre))

    readout = ad.slice_rows(x, 0, 1)
    logits = _linear(readout, params["head.w"], params["head.b"])
    if not np.all(np.isfinite(logits.data)):
        raise NumericError("non-finite activation in logits")
    z = logits.data.astype(np.float64).ravel()
    e = np.exp(z - z.max())
    return ForwardResult(logits=logits, readout=readout, probs=e / e.sum())


def loss(logits: Tensor, target) -> Tensor:
    """Soft-target cross-entropy -sum_y p(y) log q(y) as a 0-d tensor."""
    p = target.as_array() if isinstance(target, SoftLabel) else np.asarray(target, dtype=np.float64)
    p = p.reshape(1, -1)
    if p.shape[1] != logits.data.shape[1]:
        raise DataError(f"target of {p.shape[1]} classes, "
                        f"logits have {logits.data.shape[1]}")
    logq = ad.log_softmax_rows(logits)
    return ad.scale(ad.sum_all(ad.mul(logq, Tensor(p.astype(logits.data.dtype)))), -1.0)
