"""Hierarchical essay scorer with per-token gaze heads.

embedding -> dropout -> word CNN (+ReLU) -> word pooling -> sentence LSTM
-> sentence attention -> dropout -> dense+sigmoid score. The five gaze heads
read the word-CNN output at every token position.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from gazeaeg import numcore as nc
from gazeaeg.gaze import ATTRIBUTES
from gazeaeg.numcore import Tensor
from gazeaeg.textprep import PAD_INDEX, EncodedEssay

DEFAULT_GAZE_WEIGHTS = {"DT": 0.05, "FFD": 0.05, "IR": 0.01, "RC": 0.01, "Skip": 0.1}


class ConfigError(ValueError):
    pass


class InferenceError(ValueError):
    pass


@dataclass
class ModelConfig:
    embed_dim: int = 50
    cnn_kernel: int = 5
    cnn_filters: int = 100
    lstm_hidden: int = 100
    attention_dim: int = 100
    dropout_rate: float = 0.5
    word_pooling: str = "attention"  # or "mean"
    gaze_enabled: bool = False
    gaze_loss_weights: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_GAZE_WEIGHTS))

    def __post_init__(self):
        if self.word_pooling not in ("attention", "mean"):
            raise ConfigError(f"word_pooling must be 'attention' or 'mean', got {self.word_pooling!r}")
        if self.cnn_kernel % 2 == 0:
            raise ConfigError("cnn_kernel must be odd")

    def gaze_weight_vector(self) -> np.ndarray:
        missing = [a.value for a in ATTRIBUTES if a.value not in self.gaze_loss_weights]
        if missing:
            raise ConfigError(f"gaze_loss_weights missing {missing}")
        return np.array([float(self.gaze_loss_weights[a.value]) for a in ATTRIBUTES])


ModelParams = dict  # name -> float64 ndarray

# initialisation order is fixed; gaze heads come last so a config without them
# draws identical values for everything else
PARAM_ORDER = (
    "embedding", "conv_w", "conv_b", "word_att_w", "word_att_v",
    "lstm_wx", "lstm_wh", "lstm_b", "sent_att_w", "sent_att_v",
    "score_w", "score_b", "gaze_w", "gaze_b",
)


def param_shapes(config: ModelConfig, vocab_size: int) -> dict[str, tuple[int, ...]]:
    d, k, f, h, a = config.embed_dim, config.cnn_kernel, config.cnn_filters, config.lstm_hidden, config.attention_dim
    return {
        "embedding": (vocab_size, d),
        "conv_w": (k, d, f), "conv_b": (f,),
        "word_att_w": (f, a), "word_att_v": (a,),
        "lstm_wx": (f, 4 * h), "lstm_wh": (h, 4 * h), "lstm_b": (4 * h,),
        "sent_att_w": (h, a), "sent_att_v": (a,),
        "score_w": (h, 1), "score_b": (1,),
        # column j is the linear head of ATTRIBUTES[j]
        "gaze_w": (f, len(ATTRIBUTES)), "gaze_b": (len(ATTRIBUTES),),
    }


def init_params(config: ModelConfig, embeddings: np.ndarray, seed: int) -> ModelParams:
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim != 2 or embeddings.shape[1] != config.embed_dim:
        raise ConfigError(f"embedding matrix {embeddings.shape} does not match embed_dim {config.embed_dim}")
    rng = np.random.default_rng(seed)
    shapes = param_shapes(config, embeddings.shape[0])
    params: ModelParams = {}
    for name in PARAM_ORDER:
        shape = shapes[name]
        if name == "embedding":
            params[name] = embeddings.copy()
        elif name.endswith("_b"):
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.uniform(-0.05, 0.05, size=shape)
    h = config.lstm_hidden
    params["lstm_b"][h:2 * h] = 1.0
    params["embedding"][PAD_INDEX] = 0.0
    return params


@dataclass
class Batch:
    essay_ids: list[int]
    prompt_ids: list[int]
    grid: np.ndarray  # (B, S, T) int
    token_mask: np.ndarray  # (B, S, T) bool
    sentence_mask: np.ndarray  # (B, S) bool
    target: np.ndarray  # (B,)
    gaze_targets: np.ndarray  # (B, S, T, 5)
    gaze_mask: np.ndarray  # (B, S, T) bool

    def __len__(self):
        return len(self.essay_ids)


def collate(essays: Sequence[EncodedEssay], trim: bool = True) -> Batch:
    """Stack encoded essays; ``trim`` drops trailing grid rows/columns masked in every essay."""
    if not essays:
        raise ValueError("empty batch")
    grid = np.stack([e.grid for e in essays])
    tmask = np.stack([e.token_mask for e in essays])
    smask = np.stack([e.sentence_mask for e in essays])
    B, S, T = grid.shape
    gt = np.zeros((B, S, T, len(ATTRIBUTES)))
    gm = np.zeros((B, S, T), dtype=bool)
    for i, e in enumerate(essays):
        if e.gaze_targets is not None:
            gt[i] = np.moveaxis(e.gaze_targets, 0, -1)
            gm[i] = e.gaze_mask
    if trim:
        S = max(1, int(smask.any(axis=0).nonzero()[0].max(initial=-1)) + 1)
        T = max(1, int(tmask.any(axis=(0, 1)).nonzero()[0].max(initial=-1)) + 1)
        grid, tmask, smask, gt, gm = grid[:, :S, :T], tmask[:, :S, :T], smask[:, :S], gt[:, :S, :T], gm[:, :S, :T]
    return Batch([e.essay_id for e in essays], [e.prompt_id for e in essays], grid, tmask, smask,
                 np.array([e.target for e in essays], dtype=np.float64), gt, gm)


@dataclass
class Prediction:
    score: Tensor  # (B,) in (0, 1)
    gaze: Tensor | None  # (B, S, T, 5) in (0, 1); None for a parameter set without gaze heads
    word_attention: np.ndarray | None
    sentence_attention: np.ndarray


@dataclass
class EssayPrediction:
    score_unit: float
    gaze_preds: np.ndarray | None  # (5, S, T)
    sentence_attention: np.ndarray


def as_tensors(params: Mapping[str, np.ndarray]) -> dict[str, Tensor]:
    return {k: Tensor(v, requires_grad=True, name=k) for k, v in params.items()}


def forward_batch(params: Mapping[str, Tensor], batch: Batch, config: ModelConfig,
                  train: bool = False, rng: np.random.Generator | None = None) -> Prediction:
    if not batch.sentence_mask.any(axis=1).all():
        bad = [eid for eid, m in zip(batch.essay_ids, batch.sentence_mask) if not m.any()]
        raise InferenceError(f"essays without any sentence: {bad}")
    p = params
    B, S, T = batch.grid.shape
    rate = config.dropout_rate

    x = nc.embed(p["embedding"], batch.grid, padding_index=PAD_INDEX)
    # whatever sits in masked cells must not reach real tokens through the conv window
    x = nc.mul(x, batch.token_mask[..., None].astype(np.float64))
    x = nc.dropout(x, rate, train, rng)
    conv = nc.relu(nc.conv1d_same(x, p["conv_w"], p["conv_b"]))  # (B, S, T, f)
    gaze = None
    if "gaze_w" in p:
        gaze = nc.sigmoid(nc.add(nc.matmul(conv, p["gaze_w"]), p["gaze_b"]))

    if config.word_pooling == "attention":
        sent_vecs, word_att = nc.attention_pool(conv, p["word_att_w"], p["word_att_v"],
                                                batch.token_mask, allow_empty=True)
        word_att = word_att.data
    else:
        sent_vecs, word_att = nc.masked_mean_pool(conv, batch.token_mask), None

    hidden = nc.lstm_seq(sent_vecs, p["lstm_wx"], p["lstm_wh"], p["lstm_b"], batch.sentence_mask)
    essay_vec, sent_att = nc.attention_pool(hidden, p["sent_att_w"], p["sent_att_v"], batch.sentence_mask)
    essay_vec = nc.dropout(essay_vec, rate, train, rng)
    score = nc.sigmoid(nc.add(nc.matmul(essay_vec, p["score_w"]), p["score_b"]))
    return Prediction(nc.reshape(score, (B,)), gaze, word_att, sent_att.data)


def forward(params: Mapping[str, np.ndarray], encoded: EncodedEssay, config: ModelConfig,
            train_mode: bool = False, rng: np.random.Generator | None = None) -> EssayPrediction:
    """Score one essay on its full padded grid."""
    tensors = {k: Tensor(v) for k, v in params.items()}
    pred = forward_batch(tensors, collate([encoded], trim=False), config, train_mode, rng)
    gaze = None if pred.gaze is None else np.moveaxis(pred.gaze.data[0], -1, 0)
    return EssayPrediction(float(pred.score.data[0]), gaze, pred.sentence_attention[0])


def multitask_loss(pred: Prediction, batch: Batch, config: ModelConfig) -> tuple[Tensor, dict[str, float]]:
    """Mean over essays of score MSE plus weighted per-attribute masked gaze MSEs."""
    score_loss = nc.mse(pred.score, batch.target, axis=None)
    components = {"score": float(score_loss.data)}
    if not config.gaze_enabled:
        return score_loss, components
    weights = config.gaze_weight_vector()
    if pred.gaze is None:
        raise ConfigError("gaze loss requested but the parameters have no gaze heads")
    B = len(batch)
    mask = np.repeat(batch.gaze_mask[..., None], len(ATTRIBUTES), axis=-1)
    # per essay and attribute: (B, 5)
    per_essay = nc.mse(pred.gaze, batch.gaze_targets, mask, axis=(1, 2))
    per_attr = nc.mul(nc.tsum(per_essay, axis=0), 1.0 / B)
    gaze_loss = nc.tsum(nc.mul(per_attr, weights))
    for a, v in zip(ATTRIBUTES, per_attr.data):
        components[a.value] = float(v)
    return nc.add(score_loss, gaze_loss), components


def combine_components(components: Mapping[str, float], config: ModelConfig) -> float:
    total = components["score"]
    if config.gaze_enabled:
        for a in ATTRIBUTES:
            total += config.gaze_loss_weights[a.value] * components[a.value]
    return total


def predict_units(params: Mapping[str, np.ndarray], essays: Sequence[EncodedEssay], config: ModelConfig,
                  chunk: int = 200) -> np.ndarray:
    # scores never depend on the gaze heads
    tensors = {k: Tensor(v) for k, v in params.items() if not k.startswith("gaze_")}
    out = []
    for i in range(0, len(essays), chunk):
        out.append(forward_batch(tensors, collate(essays[i:i + chunk]), config).score.data)
    return np.concatenate(out) if out else np.zeros(0)


# checkpoints ----------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_params(params: Mapping[str, np.ndarray], path: str | Path) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "tensors": {k: {"shape": list(v.shape), "data": v.ravel().tolist()} for k, v in params.items()},
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_params(path: str | Path) -> ModelParams:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    return {k: np.array(t["data"], dtype=np.float64).reshape(t["shape"]) for k, t in doc["tensors"].items()}

