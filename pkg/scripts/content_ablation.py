#!/usr/bin/env python3
"""Content-signal ablation: how much AUC does exercise text carry?

Trains the text-attention variant twice on the same records, once with the
real exercise contents and once with contents shuffled across exercises
(concepts and scores untouched), and reports the AUC drop.
"""

import argparse
import os

from ktrace import Hyper, KTModel, SynthConfig, TrainConfig, generate, load_dataset, write_corpus
from ktrace.corpus import split_general
from ktrace.synth import shuffle_exercise_contents
from ktrace.train import fit


def train_once(exercises_path, records_path, seed, epochs, tag):
    data = load_dataset(exercises_path, records_path, min_len=10)
    split = split_general(data.sequences, 0.6)
    hyper = Hyper(K=6, d0=16, dv=16, dh=16, dk=8, dy=16, lr=0.002, seed=seed)
    cfg = TrainConfig(variant="eernna", hyper=hyper, epochs=epochs)
    model = KTModel("eernna", hyper, data.vocab)
    result = fit(model, split, data.exercises, cfg)
    print(f"  {tag}: best AUC {result.best_auc:.4f} (epoch {result.best_epoch})")
    return result.best_auc


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="ablation_out")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--epochs", type=int, default=20)
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    paths = write_corpus(generate(SynthConfig(seed=args.seed)),
                         os.path.join(args.out, "corpus"))
    shuffled = os.path.join(args.out, "exercises_shuffled.jsonl")
    shuffle_exercise_contents(paths["exercises"], shuffled, seed=args.seed)

    print("training eernna on real vs shuffled contents")
    clean = train_once(paths["exercises"], paths["records"], args.seed,
                       args.epochs, "real contents")
    broken = train_once(shuffled, paths["records"], args.seed,
                        args.epochs, "shuffled contents")
    print(f"\nAUC drop from shuffling contents: {clean - broken:.4f}")


if __name__ == "__main__":
    main()
