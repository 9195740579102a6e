#!/usr/bin/env python3
"""Train every variant on a synthetic corpus and print a comparison table.

Usage: python scripts/run_benchmark.py [--out DIR] [--seed N] [--epochs N]
All four variants share the same corpus, split, and dimensions; the table
reports validation metrics at the best epoch plus the cold-exercise AUC and
the generator's Bayes-optimal ceiling for context.
"""

import argparse
import json
import os
import time

from ktrace import (Hyper, KTModel, SynthConfig, TrainConfig, VARIANTS,
                    generate, load_dataset, write_corpus)
from ktrace.corpus import split_cold_start, split_general
from ktrace.evaluate import evaluate_split
from ktrace.train import fit


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="benchmark_out")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--frac", type=float, default=0.6)
    ap.add_argument("--dim", type=int, default=16, help="dv/dh/d0 size")
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    corpus = generate(SynthConfig(seed=args.seed))
    paths = write_corpus(corpus, os.path.join(args.out, "corpus"))
    data = load_dataset(paths["exercises"], paths["records"], min_len=10)
    split = split_general(data.sequences, args.frac)
    cold = split_cold_start(data.sequences, args.frac)
    ceiling = corpus.bayes_optimal_auc()
    print(f"corpus: {len(data.sequences)} students, {len(data.exercises)} exercises, "
          f"bayes ceiling {ceiling:.4f}")

    rows = []
    for variant in VARIANTS:
        hyper = Hyper(K=corpus.config.K, d0=args.dim, dv=args.dim, dh=args.dim,
                      dk=args.dim // 2, dy=args.dim, lr=0.002, seed=args.seed)
        cfg = TrainConfig(variant=variant, hyper=hyper, epochs=args.epochs,
                          checkpoint_path=os.path.join(args.out, f"{variant}.ckpt"))
        model = KTModel(variant, hyper, data.vocab)
        t0 = time.time()
        result = fit(model, split, data.exercises, cfg)
        general = evaluate_split(model, split, data.exercises)
        cold_rep = evaluate_split(model, cold, data.exercises)
        rows.append({"variant": variant, "auc": general.auc, "acc": general.acc,
                     "mae": general.mae, "rmse": general.rmse,
                     "cold_auc": cold_rep.auc, "best_epoch": result.best_epoch,
                     "seconds": round(time.time() - t0, 1)})
        print(f"  {variant}: auc {general.auc:.4f} acc {general.acc:.4f} "
              f"cold {cold_rep.auc:.4f} ({rows[-1]['seconds']}s)")

    header = f"{'variant':8} {'AUC':>7} {'ACC':>7} {'MAE':>7} {'RMSE':>7} {'coldAUC':>8}"
    print("\n" + header)
    print("-" * len(header))
    for r in rows:
        print(f"{r['variant']:8} {r['auc']:7.4f} {r['acc']:7.4f} {r['mae']:7.4f} "
              f"{r['rmse']:7.4f} {r['cold_auc']:8.4f}")
    with open(os.path.join(args.out, "benchmark.json"), "w") as fh:
        json.dump({"ceiling": ceiling, "rows": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
