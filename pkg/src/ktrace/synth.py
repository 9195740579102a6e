"""Synthetic exercising-process generator with known ground truth.

Students carry a latent per-concept mastery vector in [0,1]^K. Each step an
exercise is drawn (with concept streaks, so recent history tends to be
topically related), the correct-answer probability is

    p = (1 - slip) * s + guess * (1 - s),   s = sigmoid(a * (mastery - difficulty)),

and a correct answer raises mastery on the exercise's concepts by a fixed
learning rate (capped at 1). Exercise text deliberately encodes both the
concept (theme tokens) and the difficulty (a level token), so content carries
signal beyond the concept ids; a slice of exercises only ever appears late in
each sequence, which keeps them out of every training prefix and makes
cold-start evaluation possible.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .config import SynthConfig
from .evaluate import auc_score

# late-pool exercises may only appear from this fraction of a sequence onward,
# so they are absent from every training prefix at train fractions <= 0.7
LATE_START_FRAC = 0.7

_INTROS = ["solve", "find", "compute", "evaluate", "determine", "simplify"]
_FORMULAS = [
    "$\\frac{{x^{a}}}{{{b}}} = {c}$",
    "$\\sqrt{{x - {a}}} + {b} = {c}$",
    "$x^{a} - {b} x + {c} = 0$",
    "$\\sum i^{a} \\leq {b}$",
    "$\\int x^{a} dx = {b}$",
]


def _sigmoid(z: float) -> float:
    return 1.0 / (1.0 + math.exp(-z))


@dataclass
class SynthExercise:
    id: str
    content: str
    concepts: tuple[int, ...]
    difficulty: float
    late_pool: bool


@dataclass
class SynthStep:
    student_id: str
    t: int
    exercise_id: str
    p_correct: float
    score: int
    mastery: list[float]


@dataclass
class SynthResult:
    config: SynthConfig
    exercises: list[SynthExercise]
    records: list[dict]          # {"student_id", "interactions": [...]}
    steps: list[SynthStep] = field(default_factory=list)

    def bayes_optimal_auc(self) -> float:
        """AUC of the generator's own probabilities against realized scores:
        the ceiling any model trained on this corpus can approach."""
        return auc_score([s.p_correct for s in self.steps],
                         [s.score for s in self.steps])


def _make_content(cfg: SynthConfig, concepts, level: int) -> str:
    """Text determined entirely by the (concept set, difficulty level) cell.

    Exercises in the same cell share identical text, so content identifies
    what an exercise is about and how hard it is but can never serve as an
    exercise identity: a model only benefits from text through its semantics.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence([cfg.seed, level + 1, *sorted(concepts)]))
    theme = [f"topic{concepts[0]}w{rng.integers(cfg.themes_per_concept)}"
             for _ in range(3)]
    if len(concepts) > 1:
        theme.append(f"topic{concepts[1]}w{rng.integers(cfg.themes_per_concept)}")
    formula = _FORMULAS[rng.integers(len(_FORMULAS))].format(
        a=level + 2, b=rng.integers(1, 9), c=rng.integers(1, 9))
    filler = [f"word{rng.integers(cfg.filler_vocab)}"
              for _ in range(int(rng.integers(2, 5)))]
    parts = ([_INTROS[rng.integers(len(_INTROS))]] + theme[:2]
             + [formula, f"level{level}"] + theme[2:] + filler)
    return " ".join(parts)


def generate(cfg: SynthConfig) -> SynthResult:
    """Deterministic corpus from the config seed."""
    root = np.random.SeedSequence(cfg.seed)
    ex_seed, *student_seeds = root.spawn(1 + cfg.n_students)
    ex_rng = np.random.default_rng(ex_seed)

    lo, hi = cfg.difficulty_range
    n_late = int(round(cfg.cold_start_frac * cfg.n_exercises))
    exercises: list[SynthExercise] = []
    for i in range(cfg.n_exercises):
        concepts = [int(ex_rng.integers(cfg.K))]
        if cfg.K > 1 and ex_rng.random() < cfg.multi_concept_prob:
            other = int(ex_rng.integers(cfg.K - 1))
            concepts.append(other if other < concepts[0] else other + 1)
        difficulty = float(ex_rng.uniform(lo, hi))
        level = min(cfg.difficulty_bins - 1, int(difficulty * cfg.difficulty_bins))
        late = i >= cfg.n_exercises - n_late
        exercises.append(SynthExercise(
            id=f"e{i:04d}",
            content=_make_content(cfg, concepts, level),
            concepts=tuple(concepts), difficulty=difficulty, late_pool=late))

    main_by_concept = {c: [] for c in range(cfg.K)}
    all_by_concept = {c: [] for c in range(cfg.K)}
    for ex in exercises:
        for c in ex.concepts:
            all_by_concept[c].append(ex)
            if not ex.late_pool:
                main_by_concept[c].append(ex)

    result = SynthResult(config=cfg, exercises=exercises, records=[])
    for si, seed in enumerate(student_seeds):
        rng = np.random.default_rng(seed)
        sid = f"s{si:04d}"
        T = int(np.clip(round(rng.normal(cfg.mean_seq_len, cfg.mean_seq_len / 5)),
                        cfg.min_seq_len, cfg.max_seq_len))
        late_start = math.ceil(LATE_START_FRAC * T)
        mastery = rng.uniform(0.0, 0.4, size=cfg.K)
        concept = int(rng.integers(cfg.K))
        interactions = []
        for t in range(T):
            if rng.random() >= cfg.concept_streak:
                concept = int(rng.integers(cfg.K))
            pool = all_by_concept[concept] if t >= late_start else main_by_concept[concept]
            if not pool:
                pool = exercises if t >= late_start else [e for e in exercises
                                                          if not e.late_pool]
            ex = pool[int(rng.integers(len(pool)))]
            m_bar = float(np.mean([mastery[c] for c in ex.concepts]))
            s = _sigmoid(cfg.discrimination * (m_bar - ex.difficulty))
            p = (1.0 - cfg.slip) * s + cfg.guess * (1.0 - s)
            score = int(rng.random() < p)
            result.steps.append(SynthStep(
                student_id=sid, t=t, exercise_id=ex.id, p_correct=p,
                score=score, mastery=[round(float(m), 6) for m in mastery]))
            if score:
                for c in ex.concepts:
                    mastery[c] = min(1.0, mastery[c] + cfg.learn_rate)
            interactions.append({"exercise_id": ex.id, "score": score})
        result.records.append({"student_id": sid, "interactions": interactions})
    return result


def write_corpus(result: SynthResult, out_dir: str) -> dict[str, str]:
    """Write exercises/records/ground-truth JSONL plus meta.json; returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, fname) for name, fname in [
        ("exercises", "exercises.jsonl"), ("records", "records.jsonl"),
        ("ground_truth", "ground_truth.jsonl"), ("meta", "meta.json")]}
    with open(paths["exercises"], "w") as fh:
        for ex in result.exercises:
            fh.write(json.dumps({"id": ex.id, "content": ex.content,
                                 "concepts": list(ex.concepts)}, sort_keys=True) + "\n")
    with open(paths["records"], "w") as fh:
        for rec in result.records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(paths["ground_truth"], "w") as fh:
        for ex in result.exercises:
            fh.write(json.dumps({
                "kind": "exercise", "id": ex.id, "difficulty": round(ex.difficulty, 6),
                "concepts": list(ex.concepts), "late_pool": ex.late_pool},
                sort_keys=True) + "\n")
        for st in result.steps:
            fh.write(json.dumps({
                "kind": "step", "student_id": st.student_id, "t": st.t,
                "exercise_id": st.exercise_id, "p_correct": round(st.p_correct, 9),
                "score": st.score, "mastery": st.mastery}, sort_keys=True) + "\n")
    with open(paths["meta"], "w") as fh:
        json.dump({"config": result.config.to_dict(), "K": result.config.K,
                   "bayes_auc": round(result.bayes_optimal_auc(), 6)},
                  fh, sort_keys=True, indent=2)
        fh.write("\n")
    return paths


def bayes_optimal_auc(ground_truth_path: str) -> float:
    """Recompute the ceiling from a written ground-truth file."""
    probs, scores = [], []
    with open(ground_truth_path) as fh:
        for line in fh:
            obj = json.loads(line)
            if obj.get("kind") == "step":
                probs.append(obj["p_correct"])
                scores.append(obj["score"])
    if not probs:
        raise ValueError(f"{ground_truth_path}: no step rows")
    return auc_score(probs, scores)


def shuffle_exercise_contents(exercises_path: str, out_path: str, seed: int) -> None:
    """Permute the content field across exercises (concepts and ids stay):
    the content-signal ablation input."""
    with open(exercises_path) as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(rows))
    contents = [rows[i]["content"] for i in perm]
    with open(out_path, "w") as fh:
        for row, content in zip(rows, contents):
            row = dict(row)
            row["content"] = content
            fh.write(json.dumps(row, sort_keys=True) + "\n")
