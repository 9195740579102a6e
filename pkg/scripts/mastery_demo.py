#!/usr/bin/env python3
"""Mastery-tracking demo: drill a probe student on one concept and export the
per-step mastery estimates of a trained per-concept model as CSV.

Needs a checkpoint from an ekt* variant (e.g. scripts/run_benchmark.py or
`ktrace train --variant ekta ...`).
"""

import argparse
import sys

import numpy as np

from ktrace.checkpoint import load_checkpoint
from ktrace.corpus import Interaction, StudentSequence, load_dataset
from ktrace.evaluate import export_mastery, write_mastery_csv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", required=True)
    ap.add_argument("--data", required=True)
    ap.add_argument("--concept", type=int, default=0)
    ap.add_argument("--steps", type=int, default=30)
    ap.add_argument("--score", type=int, default=1, choices=[0, 1],
                    help="probe answers everything right (1) or wrong (0)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    model = load_checkpoint(args.model)
    data = load_dataset(f"{args.data}/exercises.jsonl", f"{args.data}/records.jsonl",
                        min_len=10)
    pool = [e.id for e in data.exercises.values() if args.concept in e.concepts]
    if not pool:
        sys.exit(f"no exercises tagged with concept {args.concept}")
    rng = np.random.default_rng(args.seed)
    drills = [Interaction(pool[rng.integers(len(pool))], args.score)
              for _ in range(args.steps)]
    probe = StudentSequence("probe", drills)
    traj = export_mastery(model, probe, data.exercises, [args.concept])
    write_mastery_csv(traj, sys.stdout)


if __name__ == "__main__":
    main()
