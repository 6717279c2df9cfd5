"""Zero-shot leave-one-prompt-out harness and Gaze / No Gaze comparison tables."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import jsonschema
import numpy as np

from gazeaeg.dataset import ASAP_PROMPTS, Essay, PromptSpec, denormalize_score
from gazeaeg.evaluation import DegenerateVarianceError, paired_ttest_2tailed, qwk
from gazeaeg.gaze import RawGazeRecord, attach_gaze, bin_and_scale, labels_by_essay
from gazeaeg.model import ModelParams, init_params, predict_units
from gazeaeg.textprep import Vocabulary, build_vocab, encode_essay, load_embeddings, random_embeddings
from gazeaeg.training import TrainConfig, train_fold

log = logging.getLogger(__name__)

N_FOLDS = 5
SIGNIFICANCE = 0.05


class ZeroShotViolation(AssertionError):
    pass


class ExperimentConfigError(ValueError):
    pass


class ComparisonError(ValueError):
    pass


@dataclass(frozen=True)
class Fold:
    train: frozenset[int]
    dev: frozenset[int]


@dataclass(frozen=True)
class SplitPlan:
    target_prompt: int
    folds: tuple[Fold, ...]
    test: frozenset[int]
    seed: int
    strategy: str = "pooled"

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.target_prompt}|{self.strategy}|".encode())
        for f in self.folds:
            h.update((",".join(map(str, sorted(f.train))) + "|" + ",".join(map(str, sorted(f.dev))) + "#").encode())
        h.update(",".join(map(str, sorted(self.test))).encode())
        return h.hexdigest()


def check_zero_shot(plan: SplitPlan, corpus: Sequence[Essay]) -> None:
    prompt_of = {e.essay_id: e.prompt_id for e in corpus}
    for i, fold in enumerate(plan.folds):
        leaked = sorted(eid for eid in fold.train | fold.dev if prompt_of[eid] == plan.target_prompt)
        if leaked:
            raise ZeroShotViolation(f"fold {i}: target prompt {plan.target_prompt} essays in train/dev: {leaked[:5]}")
        if fold.train & fold.dev:
            raise ZeroShotViolation(f"fold {i}: train and dev overlap")
    if any(prompt_of[eid] != plan.target_prompt for eid in plan.test):
        raise ZeroShotViolation("test set contains non-target essays")


def make_zero_shot_splits(corpus: Sequence[Essay], target_prompt: int, seed: int,
                          n_folds: int = N_FOLDS, strategy: str = "pooled") -> SplitPlan:
    """Dev/train folds over the pooled non-target essays; the target prompt is the test set.

    ``strategy="prompt"`` instead holds out one whole source prompt as dev in each fold.
    """
    prompts = sorted({e.prompt_id for e in corpus})
    if target_prompt not in prompts:
        raise ExperimentConfigError(f"target prompt {target_prompt} has no essays in the corpus")
    if len(prompts) < 2:
        raise ExperimentConfigError("zero-shot splits need at least two prompts")
    pool = np.array([e.essay_id for e in corpus if e.prompt_id != target_prompt])
    test = frozenset(e.essay_id for e in corpus if e.prompt_id == target_prompt)
    if strategy == "pooled":
        perm = pool[np.random.default_rng(seed).permutation(len(pool))]
        parts = [frozenset(int(x) for x in p) for p in np.array_split(perm, n_folds)]
        all_ids = frozenset(int(x) for x in pool)
        folds = tuple(Fold(all_ids - dev, dev) for dev in parts)
    elif strategy == "prompt":
        sources = [p for p in prompts if p != target_prompt]
        order = [sources[i] for i in np.random.default_rng(seed).permutation(len(sources))]
        folds = []
        for i in range(n_folds):
            dev_prompt = order[i % len(order)]
            dev = frozenset(e.essay_id for e in corpus if e.prompt_id == dev_prompt)
            train = frozenset(int(x) for x in pool) - dev
            folds.append(Fold(train, dev))
        folds = tuple(folds)
    else:
        raise ExperimentConfigError(f"unknown split strategy {strategy!r}")
    plan = SplitPlan(target_prompt, folds, test, seed, strategy)
    check_zero_shot(plan, corpus)
    return plan


@dataclass
class FoldReport:
    fold: int
    best_epoch: int
    dev_qwk: float
    test_qwk: float
    predictions: list[dict]  # {essay_id, gold, pred}
    history: list[dict]  # per epoch, without wall time


@dataclass
class ExperimentReport:
    target_prompt: int
    config: str  # "gaze" | "nogaze"
    seed: int
    split_fingerprint: str
    folds: list[FoldReport]
    mean_test_qwk: float
    settings: dict
    significance: dict | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentReport":
        doc = dict(doc)
        doc["folds"] = [FoldReport(**f) for f in doc["folds"]]
        return cls(**doc)


_NUM = {"type": "number"}
REPORT_SCHEMA = {
    "type": "object",
    "required": ["target_prompt", "config", "seed", "split_fingerprint", "folds", "mean_test_qwk", "settings"],
    "properties": {
        "target_prompt": {"type": "integer"},
        "config": {"enum": ["gaze", "nogaze"]},
        "seed": {"type": "integer"},
        "split_fingerprint": {"type": "string"},
        "mean_test_qwk": {"type": "number", "minimum": -1, "maximum": 1},
        "settings": {"type": "object"},
        "significance": {"type": ["object", "null"]},
        "folds": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["fold", "best_epoch", "dev_qwk", "test_qwk", "predictions", "history"],
                "properties": {
                    "fold": {"type": "integer", "minimum": 0},
                    "best_epoch": {"type": "integer", "minimum": 0},
                    "dev_qwk": _NUM,
                    "test_qwk": {"type": "number", "minimum": -1, "maximum": 1},
                    "predictions": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["essay_id", "gold", "pred"],
                            "properties": {"essay_id": {"type": "integer"}, "gold": {"type": "integer"},
                                           "pred": {"type": "integer"}},
                        },
                    },
                    "history": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["epoch", "train_loss", "component_losses", "dev_qwk"],
                        },
                    },
                },
            },
        },
    },
}


def validate_report(doc: dict) -> None:
    jsonschema.validate(doc, REPORT_SCHEMA)


def run_settings(cfg: TrainConfig, use_gaze: bool) -> dict:
    """Choices not fixed by the method description, recorded with every run."""
    return {
        "n_folds": N_FOLDS,
        "dev_strategy": cfg.dev_strategy,
        "word_pooling": cfg.model.word_pooling,
        "gaze_enabled": use_gaze,
        "bin_count": cfg.bin_count,
        "gaze_aggregation": "mean over readers after scaling",
        "rmsprop_rho": cfg.rho,
        "rmsprop_epsilon": cfg.epsilon,
        "batch_reduction": "mean",
        "dev_qwk": "mean of per-prompt QWK",
        "ttest_pairing": "fold",
        "score_rounding": "half away from zero, clamped",
        "dropout": "inverted; after embedding and after sentence attention",
        "cnn_activation": "relu",
        "min_count": cfg.min_count,
        "max_sentences": cfg.max_sentences,
        "max_tokens": cfg.max_tokens,
    }


@dataclass
class FoldArtifacts:
    vocab: Vocabulary
    params: ModelParams
    train_log: list[dict]


def fold_seed(seed: int, fold: int) -> int:
    return seed * 1000 + fold


def evaluate_target(params: ModelParams, vocab: Vocabulary, test_essays: Sequence[Essay], cfg: TrainConfig,
                    spec: PromptSpec, specs: Mapping[int, PromptSpec]) -> tuple[float, list[dict]]:
    encoded = [encode_essay(e, vocab, specs, cfg.max_sentences, cfg.max_tokens) for e in test_essays]
    units = predict_units(params, encoded, cfg.model)
    preds = [denormalize_score(float(u), spec) for u in units]
    gold = [e.gold_score for e in test_essays]
    rows = [{"essay_id": e.essay_id, "gold": e.gold_score, "pred": p} for e, p in zip(test_essays, preds)]
    return qwk(gold, preds, spec.min_score, spec.max_score), rows


def run_experiment(
    corpus: Sequence[Essay],
    gaze_records: Sequence[RawGazeRecord] | None,
    target_prompt: int,
    use_gaze: bool,
    cfg: TrainConfig,
    seed: int | None = None,
    specs: Mapping[int, PromptSpec] = ASAP_PROMPTS,
    embeddings_path: str | Path | None = None,
    on_fold: Callable[[int, FoldArtifacts], None] | None = None,
) -> ExperimentReport:
    seed = cfg.seed if seed is None else seed
    if use_gaze and not gaze_records:
        raise ExperimentConfigError("the gaze configuration needs gaze records")
    mcfg = dataclasses.replace(cfg.model, gaze_enabled=use_gaze)
    plan = make_zero_shot_splits(corpus, target_prompt, seed, strategy=cfg.dev_strategy)
    test_essays = [e for e in corpus if e.essay_id in plan.test]
    spec = specs[target_prompt]

    fold_reports = []
    for i, fold in enumerate(plan.folds):
        check_zero_shot(SplitPlan(target_prompt, (fold,), plan.test, seed), corpus)
        fcfg = dataclasses.replace(cfg, seed=fold_seed(seed, i), model=mcfg)
        train_essays = [e for e in corpus if e.essay_id in fold.train]
        dev_essays = [e for e in corpus if e.essay_id in fold.dev]
        vocab = build_vocab(train_essays, cfg.min_count)
        if embeddings_path is not None:
            emb = load_embeddings(embeddings_path, vocab, mcfg.embed_dim, fcfg.seed)
        else:
            emb = random_embeddings(vocab, mcfg.embed_dim, fcfg.seed)

        def enc(es):
            return [encode_essay(e, vocab, specs, cfg.max_sentences, cfg.max_tokens) for e in es]

        train_enc, dev_enc = enc(train_essays), enc(dev_essays)
        if use_gaze:
            # bins are fitted on training-fold recordings only
            recs = [r for r in gaze_records if r.essay_id in fold.train]
            per_essay = labels_by_essay(bin_and_scale(recs, cfg.bin_count)) if recs else {}
            for e in train_enc:
                if e.essay_id in per_essay:
                    attach_gaze(e, per_essay[e.essay_id])
        params = init_params(mcfg, emb, fcfg.seed)
        result = train_fold(train_enc, dev_enc, fcfg, params, specs)
        test_qwk, rows = evaluate_target(result.best_params, vocab, test_essays, fcfg, spec, specs)
        history = [{k: v for k, v in r.items() if k != "wall_time"} for r in result.history]
        dev_best = history[result.best_epoch - 1]["dev_qwk"] if result.best_epoch else float("nan")
        fold_reports.append(FoldReport(i, result.best_epoch, dev_best, test_qwk, rows, history))
        log.info("target %d fold %d: best epoch %d dev %.4f test %.4f",
                 target_prompt, i, result.best_epoch, dev_best, test_qwk)
        if on_fold is not None:
            on_fold(i, FoldArtifacts(vocab, result.best_params, result.history))

    return ExperimentReport(
        target_prompt=target_prompt,
        config="gaze" if use_gaze else "nogaze",
        seed=seed,
        split_fingerprint=plan.fingerprint(),
        folds=fold_reports,
        mean_test_qwk=float(np.mean([f.test_qwk for f in fold_reports])),
        settings=run_settings(cfg, use_gaze),
    )


# comparison -----------------------------------------------------------------

def _ttest(x: Sequence[float], y: Sequence[float]) -> dict:
    try:
        t, p = paired_ttest_2tailed(x, y)
    except DegenerateVarianceError:
        return {"t": None, "p": None, "starred": False, "n": len(x), "note": "zero-variance differences"}
    return {"t": t, "p": p, "starred": p < SIGNIFICANCE, "n": len(x)}


def format_row(label: str, nogaze: float, gaze: float, starred: bool) -> str:
    ng, g = f"{nogaze:.3f}", f"{gaze:.3f}"
    if starred:
        if gaze >= nogaze:
            g += "*"
        else:
            ng += "*"
    return f"{label} | {ng} | {g}"


@dataclass
class Comparison:
    rows: list[dict] = field(default_factory=list)
    mean_row: dict | None = None

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows, "mean": self.mean_row}, sort_keys=True, indent=1)

    def render(self) -> str:
        labels = [f"Prompt {r['target_prompt']}" for r in self.rows] + ["Mean QWK"]
        width = max(len(s) for s in labels + ["Target"])
        lines = [f"{'Target'.ljust(width)} | No Gaze | Gaze"]
        for r in self.rows:
            lines.append(format_row(f"Prompt {r['target_prompt']}".ljust(width), r["nogaze"], r["gaze"], r["starred"]))
        if self.mean_row is not None:
            m = self.mean_row
            lines.append(format_row("Mean QWK".ljust(width), m["nogaze"], m["gaze"], m["starred"]))
        return "\n".join(lines) + "\n"


def compare_and_report(gaze: Sequence[ExperimentReport], nogaze: Sequence[ExperimentReport]) -> Comparison:
    """Pair runs by target prompt; fold QWKs are compared with a two-sided paired t-test."""
    if isinstance(gaze, ExperimentReport):
        gaze = [gaze]
    if isinstance(nogaze, ExperimentReport):
        nogaze = [nogaze]
    g_by = {r.target_prompt: r for r in gaze}
    n_by = {r.target_prompt: r for r in nogaze}
    if len(g_by) != len(gaze) or len(n_by) != len(nogaze):
        raise ComparisonError("duplicate target prompts")
    if set(g_by) != set(n_by):
        raise ComparisonError(f"target prompts differ: gaze {sorted(g_by)} vs nogaze {sorted(n_by)}")
    comp = Comparison()
    all_g, all_n = [], []
    for target in sorted(g_by):
        g, n = g_by[target], n_by[target]
        if g.config != "gaze" or n.config != "nogaze":
            raise ComparisonError(f"prompt {target}: expected one gaze and one nogaze report")
        if g.seed != n.seed or g.split_fingerprint != n.split_fingerprint:
            raise ComparisonError(f"prompt {target}: runs are not fold-paired (seed or splits differ)")
        gq = [f.test_qwk for f in g.folds]
        nq = [f.test_qwk for f in n.folds]
        sig = _ttest(gq, nq)
        comp.rows.append({"target_prompt": target, "nogaze": n.mean_test_qwk, "gaze": g.mean_test_qwk,
                          "seed": g.seed, **sig})
        all_g += gq
        all_n += nq
    m_sig = _ttest(all_g, all_n) if len(all_g) >= 2 else {"t": None, "p": None, "starred": False, "n": len(all_g)}
    comp.mean_row = {"nogaze": float(np.mean([r["nogaze"] for r in comp.rows])),
                     "gaze": float(np.mean([r["gaze"] for r in comp.rows])), **m_sig}
    return comp


def attach_significance(report: ExperimentReport, other: ExperimentReport) -> None:
    report.significance = _ttest([f.test_qwk for f in report.folds], [f.test_qwk for f in other.folds])
