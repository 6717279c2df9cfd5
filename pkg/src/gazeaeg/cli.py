"""Command-line entry point: prepare, synth-corpus, synth-gaze, train, evaluate, compare, selftest."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from gazeaeg import experiment as ex
from gazeaeg.config import dump_config, load_config
from gazeaeg.dataset import count_by_prompt, load_asap_tsv, load_corpus_json, save_corpus_json
from gazeaeg.gaze import read_gaze_tsv, synth_gaze_corpus, write_gaze_tsv
from gazeaeg.model import load_params, save_params
from gazeaeg.textprep import Vocabulary
from gazeaeg.training import TrainConfig, history_jsonl

log = logging.getLogger("gazeaeg")


def cmd_prepare(args) -> int:
    essays = load_asap_tsv(args.essays)
    save_corpus_json(essays, args.out)
    counts = count_by_prompt(essays)
    print(f"{len(essays)} essays: " + ", ".join(f"prompt {p}: {n}" for p, n in counts.items()))
    return 0


def cmd_synth_corpus(args) -> int:
    from gazeaeg.synthetic import make_synthetic_corpus

    prompts = tuple(int(p) for p in args.prompts.split(","))
    essays = make_synthetic_corpus(args.essays, prompts, args.seed)
    save_corpus_json(essays, args.out)
    print(f"wrote {len(essays)} synthetic essays to {args.out}")
    return 0


def cmd_synth_gaze(args) -> int:
    corpus = load_corpus_json(args.corpus)
    records = synth_gaze_corpus(corpus, args.seed, args.essays, args.readers)
    write_gaze_tsv(records, args.out)
    print(f"wrote {len(records)} gaze records for {len({r.essay_id for r in records})} essays to {args.out}")
    return 0


def _resolve_config(args) -> TrainConfig:
    cfg, _ = load_config(args.config_file) if args.config_file else (TrainConfig(), {})
    if args.epochs is not None:
        cfg.epochs = args.epochs
    return cfg


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    cfg.seed = args.seed
    use_gaze = args.config == "gaze"
    corpus = load_corpus_json(args.corpus)
    records = read_gaze_tsv(args.gaze) if args.gaze else None
    run = Path(args.out)
    run.mkdir(parents=True, exist_ok=True)
    meta = {
        "run_config": args.config,
        "target_prompt": args.target_prompt,
        "corpus": str(Path(args.corpus).resolve()),
        "gaze": str(Path(args.gaze).resolve()) if args.gaze else None,
        "embeddings": str(Path(args.embeddings).resolve()) if args.embeddings else None,
    }
    settings = ex.run_settings(cfg, use_gaze)
    (run / "config.txt").write_text(
        dump_config(cfg, {**meta, **{f"setting.{k}": v for k, v in settings.items()}}), encoding="utf-8")

    def save_fold(i: int, art: ex.FoldArtifacts) -> None:
        d = run / f"fold_{i}"
        d.mkdir(exist_ok=True)
        save_params(art.params, d / "params.json")
        (d / "vocab.txt").write_text("\n".join(art.vocab.tokens) + "\n", encoding="utf-8")
        (d / "train_log.jsonl").write_text(history_jsonl(art.train_log), encoding="utf-8")

    report = ex.run_experiment(corpus, records, args.target_prompt, use_gaze, cfg, args.seed,
                               embeddings_path=args.embeddings, on_fold=save_fold)
    for f in report.folds:
        (run / f"fold_{f.fold}" / "fold.json").write_text(json.dumps({
            "best_epoch": f.best_epoch, "dev_qwk": f.dev_qwk, "history": f.history}, sort_keys=True), encoding="utf-8")
    (run / "report.json").write_text(report.to_json(), encoding="utf-8")
    print(f"prompt {report.target_prompt} {report.config}: mean test QWK {report.mean_test_qwk:.3f} "
          f"(folds: {', '.join(f'{f.test_qwk:.3f}' for f in report.folds)})")
    return 0


def evaluate_run(run: Path) -> ex.ExperimentReport:
    """Rebuild the experiment report from a run directory's checkpoints."""
    cfg, meta = load_config(run / "config.txt")
    target = int(meta["target_prompt"])
    use_gaze = meta["run_config"] == "gaze"
    corpus = load_corpus_json(meta["corpus"])
    spec = ex.ASAP_PROMPTS[target]
    plan = ex.make_zero_shot_splits(corpus, target, cfg.seed, strategy=cfg.dev_strategy)
    test_essays = [e for e in corpus if e.essay_id in plan.test]
    folds = []
    for i in range(len(plan.folds)):
        d = run / f"fold_{i}"
        vocab = Vocabulary((d / "vocab.txt").read_text(encoding="utf-8").splitlines())
        params = load_params(d / "params.json")
        saved = json.loads((d / "fold.json").read_text(encoding="utf-8"))
        test_qwk, rows = ex.evaluate_target(params, vocab, test_essays, cfg, spec, ex.ASAP_PROMPTS)
        folds.append(ex.FoldReport(i, saved["best_epoch"], saved["dev_qwk"], test_qwk, rows, saved["history"]))
    return ex.ExperimentReport(target, "gaze" if use_gaze else "nogaze", cfg.seed, plan.fingerprint(), folds,
                               float(np.mean([f.test_qwk for f in folds])), ex.run_settings(cfg, use_gaze))


def cmd_evaluate(args) -> int:
    report = evaluate_run(Path(args.run))
    ex.validate_report(report.to_dict())
    Path(args.out).write_text(report.to_json(), encoding="utf-8")
    print(f"prompt {report.target_prompt} {report.config}: mean test QWK {report.mean_test_qwk:.3f}")
    return 0


def _load_report(run: Path) -> ex.ExperimentReport:
    path = run / "report.json"
    if path.exists():
        return ex.ExperimentReport.from_dict(json.loads(path.read_text(encoding="utf-8")))
    return evaluate_run(run)


def cmd_compare(args) -> int:
    gaze = [_load_report(Path(p)) for p in args.gaze_run]
    nogaze = [_load_report(Path(p)) for p in args.nogaze_run]
    comp = ex.compare_and_report(gaze, nogaze)
    out = Path(args.out)
    out.write_text(comp.render(), encoding="utf-8")
    out.with_suffix(".json").write_text(comp.to_json(), encoding="utf-8")
    print(comp.render(), end="")
    return 0


def cmd_selftest(args) -> int:
    from gazeaeg.selftest import run_selftest

    results = run_selftest()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return 0 if all(ok for _, ok, _ in results) else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gazeaeg", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="convert the ASAP training TSV to corpus.json")
    p.add_argument("--essays", required=True)
    p.add_argument("--out", default="corpus.json")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("synth-corpus", help="write a synthetic multi-prompt corpus.json")
    p.add_argument("--essays", type=int, default=800)
    p.add_argument("--prompts", default="1,2,3,4")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="corpus.json")
    p.set_defaults(func=cmd_synth_corpus)

    p = sub.add_parser("synth-gaze", help="simulate gaze recordings for K essays")
    p.add_argument("--corpus", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--essays", type=int, default=48)
    p.add_argument("--readers", type=int, default=8)
    p.add_argument("--out", default="gaze.tsv")
    p.set_defaults(func=cmd_synth_gaze)

    p = sub.add_parser("train", help="five-fold zero-shot training for one target prompt")
    p.add_argument("--corpus", required=True)
    p.add_argument("--gaze")
    p.add_argument("--target-prompt", type=int, required=True)
    p.add_argument("--config", choices=["gaze", "nogaze"], default="nogaze")
    p.add_argument("--config-file", help="key = value overrides of the training defaults")
    p.add_argument("--embeddings", help="plain-text word vectors (e.g. glove.6B.50d.txt)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score the target prompt from a run's checkpoints")
    p.add_argument("--run", required=True)
    p.add_argument("--out", default="report.json")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="Gaze vs No Gaze table with significance stars")
    p.add_argument("--gaze-run", nargs="+", required=True)
    p.add_argument("--nogaze-run", nargs="+", required=True)
    p.add_argument("--out", default="table.txt")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("selftest", help="gradient checks and metric oracles")
    p.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
