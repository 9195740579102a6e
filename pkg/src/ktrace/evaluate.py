"""Metrics and evaluation protocols over frozen models.

Evaluation never updates parameters: each student's training prefix is
replayed with teacher forcing (true scores consumed between targets) and the
predictions at target steps are pooled into MAE/RMSE/ACC/AUC. AUC uses the
rank statistic with tied pairs credited 0.5.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .autodiff import no_grad
from .corpus import Exercise, Split, StudentSequence
from .model import EncodingCache, KTModel, build_pack

log = logging.getLogger(__name__)


@dataclass
class MetricReport:
    mae: float
    rmse: float
    acc: float
    auc: float | None
    n: int
    mode: str = ""
    variant: str = ""

    def to_dict(self) -> dict:
        return {"mae": self.mae, "rmse": self.rmse, "acc": self.acc,
                "auc": self.auc, "n": self.n, "mode": self.mode,
                "variant": self.variant}


def auc_score(preds, truth) -> float | None:
    """Rank-statistic AUC; ties get half credit. None if one class is absent."""
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(truth)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    order = np.argsort(p, kind="mergesort")
    ranks = np.empty(len(p))
    sorted_p = p[order]
    # average ranks over tied runs
    boundaries = np.flatnonzero(np.diff(sorted_p)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [len(p)]])
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = 0.5 * (s + 1 + e)
    pos_rank_sum = ranks[y == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def metrics(preds, truth, mode: str = "", variant: str = "") -> MetricReport:
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(truth, dtype=np.float64)
    if p.shape != y.shape or p.size == 0:
        raise ValueError(f"bad metric inputs: {p.shape} preds vs {y.shape} truth")
    err = p - y
    return MetricReport(
        mae=float(np.abs(err).mean()),
        rmse=float(np.sqrt((err * err).mean())),
        acc=float(((p >= 0.5) == (y == 1)).mean()),
        auc=auc_score(p, y),
        n=int(p.size), mode=mode, variant=variant,
    )


def permutation_null(truth, n_perm: int = 200,
                     rng: np.random.Generator | None = None):
    """Mean and sigma of AUC under label permutation (scores as rank noise)."""
    rng = rng or np.random.default_rng(0)
    y = np.asarray(truth)
    scores = rng.random(len(y))
    vals = []
    for _ in range(n_perm):
        vals.append(auc_score(scores, rng.permutation(y)))
    vals = np.array([v for v in vals if v is not None])
    return float(vals.mean()), float(vals.std())


def _forward_students(model: KTModel, sids: list[str], split: Split,
                      exercises: dict[str, Exercise], cache: EncodingCache,
                      capture: bool = False):
    seqs = [split.full[s] for s in sids]
    pack = build_pack(seqs, exercises)
    out = model.forward_pack(pack, cache=cache, capture_states=capture)
    return pack, out


def evaluate_split(model: KTModel, split: Split, exercises: dict[str, Exercise],
                   *, threads: int = 1) -> MetricReport:
    """Pool predictions at every target step; parameters stay untouched."""
    if not split.targets:
        raise ValueError("split has no targets to evaluate")
    by_student: dict[str, list[int]] = {}
    for t in split.targets:
        by_student.setdefault(t.student_id, []).append(t.step)
    sids = sorted(by_student)
    need = sorted({it.exercise_id for s in sids
                   for it in split.full[s].interactions})
    with no_grad():
        cache = model.precompute_encodings(exercises, need)
        groups = [sids[lo:lo + model.hyper.batch]
                  for lo in range(0, len(sids), model.hyper.batch)]

        def run(group):
            _, out = _forward_students(model, group, split, exercises, cache)
            return {(sid, step): float(out.probs.data[b, step])
                    for b, sid in enumerate(group) for step in by_student[sid]}

        preds_map: dict[tuple, float] = {}
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                for chunk in pool.map(run, groups):
                    preds_map.update(chunk)
        else:
            for group in groups:
                preds_map.update(run(group))

    preds, truth = [], []
    for t in split.targets:
        preds.append(preds_map[(t.student_id, t.step)])
        truth.append(split.full[t.student_id].interactions[t.step].score)
    return metrics(preds, truth, mode=split.mode, variant=model.variant)


# -- attention-group analysis --------------------------------------------------

@dataclass
class AttentionGroupRow:
    student_id: str
    target_step: int
    group: str
    group_score: float
    observed: float

    @property
    def distance(self) -> float:
        return abs(self.group_score - self.observed)


@dataclass
class AttentionGroupReport:
    rows: list[AttentionGroupRow] = field(default_factory=list)
    #: per (student, group): Euclidean distance across that student's targets
    student_distance: dict[tuple[str, str], float] = field(default_factory=dict)

    def mean_distance(self, group: str) -> float:
        vals = [r.distance for r in self.rows if r.group == group]
        if not vals:
            raise ValueError(f"no rows for group {group!r}")
        return float(np.mean(vals))


GROUPS = ("low", "mid", "high")


def _group_of(value: float) -> str:
    if value <= 0.33:
        return "low"
    if value <= 0.66:
        return "mid"
    return "high"


def attention_groups(model: KTModel, split: Split, exercises: dict[str, Exercise],
                     *, random_size: int = 10,
                     rng: np.random.Generator | None = None) -> AttentionGroupReport:
    """History-relevance analysis for attention variants.

    For each target step the history cosines are min-max normalized to [0, 1]
    and the history partitioned at 0.33/0.66 into low/mid/high groups; each
    group is summarized by its mean observed score and compared with the
    target's observed score. A `random_size`-exercise random control group is
    added per step. Empty groups are omitted; if all weights tie, min-max
    collapses everything to 0 and only the low group is emitted.
    """
    if not model.is_attention:
        raise ValueError("attention-group analysis needs an attention variant")
    if not split.targets:
        raise ValueError("split has no targets")
    rng = rng or np.random.default_rng(0)
    by_student: dict[str, list[int]] = {}
    for t in split.targets:
        by_student.setdefault(t.student_id, []).append(t.step)
    sids = sorted(by_student)
    need = sorted({it.exercise_id for s in sids
                   for it in split.full[s].interactions})
    report = AttentionGroupReport()
    per_student: dict[tuple[str, str], list[float]] = {}

    with no_grad():
        cache = model.precompute_encodings(exercises, need)
        for lo in range(0, len(sids), model.hyper.batch):
            group_ids = sids[lo:lo + model.hyper.batch]
            pack, out = _forward_students(model, group_ids, split, exercises, cache)
            for b, sid in enumerate(group_ids):
                scores = np.array([it.score for it in split.full[sid].interactions],
                                  dtype=np.float64)
                for step in sorted(by_student[sid]):
                    if step < 1:
                        continue
                    alpha = out.attn[b, step, :step]
                    span = alpha.max() - alpha.min()
                    norm = (alpha - alpha.min()) / span if span > 0 else np.zeros_like(alpha)
                    observed = scores[step]
                    buckets: dict[str, list[int]] = {}
                    for j, v in enumerate(norm):
                        buckets.setdefault(_group_of(v), []).append(j)
                    pick = rng.choice(step, size=min(random_size, step), replace=False)
                    buckets["random"] = list(pick)
                    for gname, idxs in buckets.items():
                        row = AttentionGroupRow(
                            student_id=sid, target_step=step, group=gname,
                            group_score=float(scores[idxs].mean()),
                            observed=float(observed))
                        report.rows.append(row)
                        per_student.setdefault((sid, gname), []).append(
                            row.group_score - row.observed)

    for key, diffs in per_student.items():
        report.student_distance[key] = float(np.linalg.norm(diffs))
    return report


def write_attention_csv(report: AttentionGroupReport, path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["student_id", "target_step", "group", "distance"])
        for r in report.rows:
            w.writerow([r.student_id, r.target_step, r.group, f"{r.distance:.6f}"])


# -- mastery trajectories -----------------------------------------------------

@dataclass
class MasteryRow:
    t: int
    concept: int
    level: float
    exercise_id: str  # "" for the t=0 prior row
    score: int | None


@dataclass
class MasteryTrajectory:
    student_id: str
    rows: list[MasteryRow] = field(default_factory=list)

    def levels(self, concept: int) -> list[float]:
        return [r.level for r in self.rows if r.concept == concept]


def export_mastery(model: KTModel, sequence: StudentSequence,
                   exercises: dict[str, Exercise],
                   concepts) -> MasteryTrajectory:
    """Per-step mastery levels for the requested concepts, prior state included.

    A single forward pass captures the state after 0..T interactions; each
    state is probed per concept through the trained head without updates.
    """
    if not model.is_ekt:
        raise ValueError("mastery export needs a per-concept (ekt*) variant")
    concepts = list(concepts)
    for c in concepts:
        if not 0 <= c < model.hyper.K:
            raise ValueError(f"concept id {c} outside [0, {model.hyper.K})")
    states = model.trace_states(sequence.interactions, exercises)  # (T+1, K, dh)
    traj = MasteryTrajectory(student_id=sequence.student_id)
    for t in range(states.shape[0]):
        it = sequence.interactions[t - 1] if t > 0 else None
        for c in concepts:
            traj.rows.append(MasteryRow(
                t=t, concept=c, level=model.mastery_from_state(states[t], c),
                exercise_id=it.exercise_id if it else "",
                score=it.score if it else None))
    return traj


def write_mastery_csv(traj: MasteryTrajectory, fh) -> None:
    w = csv.writer(fh)
    w.writerow(["student_id", "t", "concept", "level", "exercise_id", "score"])
    for r in traj.rows:
        w.writerow([traj.student_id, r.t, r.concept, f"{r.level:.6f}",
                    r.exercise_id, "" if r.score is None else r.score])
