"""Command-line workflow: synth, train, eval, predict, track.

Machine-readable JSON goes to stdout, logs to stderr. Exit codes: 0 success,
1 usage error, 2 data error, 3 numeric failure. Every command echoes its
resolved configuration so a run can be replayed from its own output.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint
from .config import Hyper, ModelOptions, SynthConfig, TrainConfig, VARIANTS
from .corpus import (CorpusError, load_dataset, split_cold_start,
                     split_cold_student, split_general)
from .evaluate import (attention_groups, evaluate_split, export_mastery,
                       write_attention_csv, write_mastery_csv)
from .model import KTModel
from .synth import generate, write_corpus
from .train import TrainingDiverged, fit

log = logging.getLogger("ktrace")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

SPLIT_MODES = {"general": split_general, "cold_exercise": split_cold_start,
               "cold_student": split_cold_student}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


class UsageError(ValueError):
    pass


def _emit(obj: dict):
    json.dump(obj, sys.stdout, sort_keys=True)
    sys.stdout.write("\n")


def _add_data_args(p, with_minlen=True):
    p.add_argument("--data", required=True, help="corpus directory")
    if with_minlen:
        p.add_argument("--min-len", type=int, default=10,
                       help="drop students with fewer interactions")


def _load_dir(data_dir: str, min_len: int, K: int | None):
    ex_path = os.path.join(data_dir, "exercises.jsonl")
    rec_path = os.path.join(data_dir, "records.jsonl")
    return load_dataset(ex_path, rec_path, min_len=min_len, K=K)


def _data_K(data_dir: str) -> int | None:
    meta = os.path.join(data_dir, "meta.json")
    if os.path.exists(meta):
        with open(meta) as fh:
            return int(json.load(fh)["K"])
    return None


def build_parser() -> _Parser:
    parser = _Parser(prog="ktrace", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--students", type=int, default=500)
    p.add_argument("--exercises", type=int, default=300)
    p.add_argument("--concepts", type=int, default=6)
    p.add_argument("--mean-len", type=int, default=60)
    p.add_argument("--cold-frac", type=float, default=0.10)

    p = sub.add_parser("train", help="train one variant")
    p.add_argument("--variant", required=True, choices=VARIANTS)
    _add_data_args(p)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--frac", type=float, default=0.8, choices=[0.6, 0.7, 0.8, 0.9],
                   help="training prefix fraction (rest validates)")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--clip-norm", type=float, default=None)
    p.add_argument("--concepts", type=int, default=None,
                   help="number of tracked concepts (default: meta.json)")
    for dim, dflt in [("d0", 50), ("dv", 100), ("dh", 100), ("dk", 25), ("dy", 50)]:
        p.add_argument(f"--{dim}", type=int, default=dflt)
    p.add_argument("--freeze-memory", action="store_true")
    p.add_argument("--normalize-attention", action="store_true")
    p.add_argument("--per-slot-weights", action="store_true")
    p.add_argument("--freeze-word-emb", action="store_true")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--split", default="general", choices=sorted(SPLIT_MODES))
    p.add_argument("--frac", type=float, default=0.6, choices=[0.6, 0.7, 0.8, 0.9])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--csv", default=None, help="also write metrics as CSV")
    p.add_argument("--attention-csv", default=None,
                   help="write attention-group distances (attention variants)")

    p = sub.add_parser("predict", help="predict one student on one exercise")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--student", required=True)
    p.add_argument("--exercise", required=True)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("track", help="export a mastery trajectory as CSV")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--student", required=True)
    p.add_argument("--concepts", required=True, help="comma-separated concept ids")
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _cmd_synth(args) -> int:
    cfg = SynthConfig(n_students=args.students, n_exercises=args.exercises,
                      K=args.concepts, mean_seq_len=args.mean_len,
                      cold_start_frac=args.cold_frac, seed=args.seed)
    result = generate(cfg)
    paths = write_corpus(result, args.out)
    _emit({"command": "synth", "config": cfg.to_dict(), "files": paths,
           "bayes_auc": result.bayes_optimal_auc(),
           "n_records": sum(len(r["interactions"]) for r in result.records)})
    return EXIT_OK


def _cmd_train(args) -> int:
    K = args.concepts if args.concepts is not None else _data_K(args.data)
    if K is None:
        raise UsageError("--concepts is required when the data dir has no meta.json")
    data = _load_dir(args.data, args.min_len, K)
    hyper = Hyper(K=K, d0=args.d0, dv=args.dv, dh=args.dh, dk=args.dk, dy=args.dy,
                  lr=args.lr, dropout_p=args.dropout, batch=args.batch,
                  seed=args.seed)
    options = ModelOptions(per_slot_weights=args.per_slot_weights,
                           normalize_attention=args.normalize_attention,
                           freeze_memory=args.freeze_memory,
                           freeze_word_emb=args.freeze_word_emb)
    cfg = TrainConfig(variant=args.variant, hyper=hyper, epochs=args.epochs,
                      patience=args.patience, clip_norm=args.clip_norm,
                      checkpoint_path=args.out, options=options)
    split = split_general(data.sequences, args.frac)
    model = KTModel(args.variant, hyper, data.vocab, options=options)
    result = fit(model, split, data.exercises, cfg)
    _emit({"command": "train", "variant": args.variant, "hyper": hyper.to_dict(),
           "options": options.to_dict(), "frac": args.frac, "epochs": args.epochs,
           "seed": args.seed, "checkpoint": args.out,
           "best_auc": result.best_auc, "best_epoch": result.best_epoch,
           "history": result.history})
    return EXIT_OK


def _cmd_eval(args) -> int:
    model = load_checkpoint(args.model)
    data = _load_dir(args.data, args.min_len, model.hyper.K)
    split = SPLIT_MODES[args.split](data.sequences, args.frac)
    report = evaluate_split(model, split, data.exercises, threads=args.threads)
    if args.attention_csv:
        rng = np.random.default_rng(args.seed)
        groups = attention_groups(model, split, data.exercises, rng=rng)
        write_attention_csv(groups, args.attention_csv)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("mae,rmse,acc,auc,n,mode,variant\n")
            d = report.to_dict()
            fh.write(",".join(str(d[k]) for k in
                              ["mae", "rmse", "acc", "auc", "n", "mode", "variant"]) + "\n")
    _emit({"command": "eval", "model": args.model, "split": args.split,
           "frac": args.frac, "seed": args.seed, "report": report.to_dict()})
    return EXIT_OK


def _cmd_predict(args) -> int:
    model = load_checkpoint(args.model)
    data = _load_dir(args.data, args.min_len, model.hyper.K)
    if args.exercise not in data.exercises:
        raise CorpusError(f"unknown exercise id '{args.exercise}'")
    history = []
    for seq in data.sequences:
        if seq.student_id == args.student:
            history = seq.interactions
            break
    trace = model.predict_next(history, data.exercises, args.exercise)
    _emit({"command": "predict", "model": args.model, "student": args.student,
           "exercise": args.exercise, "seed": args.seed,
           "variant": trace.variant, "r_hat": trace.r_hat,
           "alpha": None if trace.alpha is None else trace.alpha.tolist(),
           "beta": None if trace.beta is None else trace.beta.tolist(),
           "history_length": len(history)})
    return EXIT_OK


def _cmd_track(args) -> int:
    model = load_checkpoint(args.model)
    data = _load_dir(args.data, args.min_len, model.hyper.K)
    try:
        concepts = [int(c) for c in args.concepts.split(",") if c != ""]
    except ValueError as exc:
        raise UsageError(f"bad --concepts list: {args.concepts!r}") from exc
    seq = next((s for s in data.sequences if s.student_id == args.student), None)
    if seq is None:
        raise CorpusError(f"unknown student id '{args.student}'")
    traj = export_mastery(model, seq, data.exercises, concepts)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_mastery_csv(traj, fh)
        _emit({"command": "track", "student": args.student, "concepts": concepts,
               "seed": args.seed, "csv": args.out, "rows": len(traj.rows)})
    else:
        write_mastery_csv(traj, sys.stdout)
    return EXIT_OK


_COMMANDS = {"synth": _cmd_synth, "train": _cmd_train, "eval": _cmd_eval,
             "predict": _cmd_predict, "track": _cmd_track}


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        log.error("usage: %s", exc)
        return EXIT_USAGE
    except (CorpusError, CheckpointError, FileNotFoundError, KeyError) as exc:
        log.error("data: %s", exc)
        return EXIT_DATA
    except (TrainingDiverged, FloatingPointError) as exc:
        log.error("numeric: %s", exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        log.error("usage: %s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
