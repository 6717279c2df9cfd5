"""RMSProp-with-momentum training loop with best-epoch selection on dev QWK."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from gazeaeg import numcore as nc
from gazeaeg.dataset import ASAP_PROMPTS, PromptSpec, denormalize_score
from gazeaeg.evaluation import qwk
from gazeaeg.model import ConfigError, ModelConfig, ModelParams, as_tensors, collate, forward_batch, multitask_loss, predict_units
from gazeaeg.textprep import PAD_INDEX, EncodedEssay

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 200
    epochs: int = 50
    lr: float = 0.001
    rho: float = 0.9
    momentum: float = 0.9
    epsilon: float = 1e-8
    seed: int = 0
    max_sentences: int = 40
    max_tokens: int = 50
    min_count: int = 2
    bin_count: int = 5
    dev_strategy: str = "pooled"  # or "prompt": one held-out source prompt per fold
    grad_clip: float | None = None  # global-norm clipping, off by default
    lr_decay: float = 1.0  # per-epoch multiplicative decay, off by default
    model: ModelConfig = field(default_factory=ModelConfig)


@dataclass
class OptimState:
    acc: dict[str, np.ndarray]
    vel: dict[str, np.ndarray]
    lr: float = 0.001
    rho: float = 0.9
    momentum: float = 0.9
    epsilon: float = 1e-8

    @classmethod
    def fresh(cls, params: Mapping[str, np.ndarray], lr=0.001, rho=0.9, momentum=0.9, epsilon=1e-8) -> "OptimState":
        return cls({k: np.zeros_like(v) for k, v in params.items()},
                   {k: np.zeros_like(v) for k, v in params.items()}, lr, rho, momentum, epsilon)


def rmsprop_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
                 state: OptimState) -> tuple[dict[str, np.ndarray], OptimState]:
    """acc <- rho*acc + (1-rho)*g^2;  v <- momentum*v + lr*g/sqrt(acc+eps);  theta <- theta - v."""
    new_params, acc, vel = {}, {}, {}
    for name, theta in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != theta.shape:
            raise TrainingError(f"gradient for {name} has shape {g.shape}, expected {theta.shape}")
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient for {name}")
        a = state.rho * state.acc[name] + (1.0 - state.rho) * g * g
        v = state.momentum * state.vel[name] + state.lr * g / np.sqrt(a + state.epsilon)
        new_params[name], acc[name], vel[name] = theta - v, a, v
    return new_params, OptimState(acc, vel, state.lr, state.rho, state.momentum, state.epsilon)


def batch_iter(essays: Sequence, batch_size: int, seed) -> list[list]:
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    order = np.random.default_rng(seed).permutation(len(essays))
    return [[essays[i] for i in order[s:s + batch_size]] for s in range(0, len(essays), batch_size)]


def dev_qwk(units: np.ndarray, essays: Sequence[EncodedEssay], specs: Mapping[int, PromptSpec]) -> float:
    """Unweighted mean over prompts of the per-prompt QWK on denormalized predictions."""
    by_prompt: dict[int, tuple[list[int], list[int]]] = {}
    for u, e in zip(units, essays):
        spec = specs[e.prompt_id]
        gold, pred = by_prompt.setdefault(e.prompt_id, ([], []))
        gold.append(e.gold_score)
        pred.append(denormalize_score(float(u), spec))
    values = [qwk(g, p, specs[pid].min_score, specs[pid].max_score) for pid, (g, p) in sorted(by_prompt.items())]
    return float(np.mean(values))


@dataclass
class FoldResult:
    best_params: ModelParams
    best_epoch: int  # 1-based; 0 when no epoch ran
    history: list[dict]


def train_fold(train: Sequence[EncodedEssay], dev: Sequence[EncodedEssay], cfg: TrainConfig,
               params: ModelParams, specs: Mapping[int, PromptSpec] = ASAP_PROMPTS,
               on_epoch: Callable[[dict], None] | None = None) -> FoldResult:
    if not train or not dev:
        raise ConfigError("train and dev sets must be non-empty")
    overlap = {e.essay_id for e in train} & {e.essay_id for e in dev}
    if overlap:
        raise ConfigError(f"train and dev share essays: {sorted(overlap)[:5]}")
    mcfg = cfg.model
    state = OptimState.fresh(params, cfg.lr, cfg.rho, cfg.momentum, cfg.epsilon)
    best, best_epoch, best_qwk = params, 0, -np.inf
    history = []
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        state.lr = cfg.lr * cfg.lr_decay ** (epoch - 1)
        rng = np.random.default_rng([cfg.seed, epoch, 1])
        total, comp_sum, seen = 0.0, {}, 0
        for batch_essays in batch_iter(train, cfg.batch_size, [cfg.seed, epoch]):
            batch = collate(batch_essays)
            tensors = as_tensors(params)
            with nc.Tape() as tape:
                pred = forward_batch(tensors, batch, mcfg, train=True, rng=rng)
                loss, comps = multitask_loss(pred, batch, mcfg)
            grads = tape.backward(loss, tensors)
            grads["embedding"][PAD_INDEX] = 0.0
            if cfg.grad_clip is not None:
                norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
                if norm > cfg.grad_clip:
                    grads = {k: g * (cfg.grad_clip / norm) for k, g in grads.items()}
            params, state = rmsprop_step(params, grads, state)
            n = len(batch)
            total += float(loss.data) * n
            for k, v in comps.items():
                comp_sum[k] = comp_sum.get(k, 0.0) + v * n
            seen += n
        qwk_dev = dev_qwk(predict_units(params, dev, mcfg), dev, specs)
        record = {
            "epoch": epoch,
            "train_loss": total / seen,
            "component_losses": {k: v / seen for k, v in comp_sum.items()},
            "dev_qwk": qwk_dev,
            "wall_time": time.perf_counter() - t0,
        }
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        log.debug("epoch %d loss %.5f dev qwk %.4f", epoch, record["train_loss"], qwk_dev)
        if qwk_dev > best_qwk:
            best, best_epoch, best_qwk = params, epoch, qwk_dev
    return FoldResult(best, best_epoch, history)


def history_jsonl(history: Sequence[dict]) -> str:
    return "".join(json.dumps(r) + "\n" for r in history)
