"""No Gaze (and, given a gaze TSV, Gaze) zero-shot runs on the real ASAP training file.

    python3 scripts/run_asap.py --tsv training_set_rel3.tsv [--gaze gaze.tsv] [--embeddings glove.6B.50d.txt]

Every prompt is held out in turn; reports and the comparison table go to --out.
Expect hours of CPU time at the default 50 epochs.
"""
import argparse
import logging
from pathlib import Path

import numpy as np

from gazeaeg.dataset import count_by_prompt, load_asap_tsv
from gazeaeg.experiment import compare_and_report, run_experiment
from gazeaeg.gaze import read_gaze_tsv
from gazeaeg.training import TrainConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--tsv", required=True)
    ap.add_argument("--gaze")
    ap.add_argument("--embeddings")
    ap.add_argument("--targets", default="1,2,3,4,5,6,7,8")
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/asap")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    corpus = load_asap_tsv(args.tsv)
    print(f"{len(corpus)} essays: {count_by_prompt(corpus)}")
    records = read_gaze_tsv(args.gaze) if args.gaze else None
    cfg = TrainConfig(epochs=args.epochs, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    configs = ["nogaze", "gaze"] if records else ["nogaze"]
    reports = {c: [] for c in configs}
    for target in (int(t) for t in args.targets.split(",")):
        for config in configs:
            rep = run_experiment(corpus, records, target, config == "gaze", cfg, args.seed,
                                 embeddings_path=args.embeddings)
            (out / f"prompt{target}_{config}.json").write_text(rep.to_json())
            reports[config].append(rep)
            print(f"prompt {target} {config}: mean test QWK {rep.mean_test_qwk:.3f}", flush=True)
    print(f"No Gaze mean over targets: {np.mean([r.mean_test_qwk for r in reports['nogaze']]):.3f}")
    if records:
        comp = compare_and_report(reports["gaze"], reports["nogaze"])
        (out / "table.txt").write_text(comp.render())
        (out / "table.json").write_text(comp.to_json())
        print(comp.render(), end="")


if __name__ == "__main__":
    main()
