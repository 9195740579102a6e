"""Exercise text tokenization, vocabularies, dataset loading, and splits.

File formats (one JSON object per line):
  exercises: {"id": str, "content": str, "concepts": [int]}
  records:   {"student_id": str, "interactions": [{"exercise_id": str, "score": 0|1}]}
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"

_PROSE_SPLIT = re.compile(r"[\W_]+", re.UNICODE)
# TeX lexical tokens: a backslash command, a digit run, or any single glyph.
_TEX_TOKEN = re.compile(r"\\[A-Za-z]+|\d+|\S")


class CorpusError(ValueError):
    """Malformed or inconsistent input data."""


def tokenize(content: str) -> list[str]:
    """Split exercise text into tokens, expanding $...$ formulas lexically.

    Prose is lowercased and split on whitespace/punctuation; formula spans
    are lexed into TeX tokens (commands, digit runs, single glyphs) kept
    verbatim. Raises CorpusError on an unbalanced formula delimiter.
    """
    if not content:
        raise CorpusError("empty content")
    tokens: list[str] = []
    pos = 0
    while True:
        start = content.find("$", pos)
        prose = content[pos:] if start < 0 else content[pos:start]
        tokens.extend(t for t in _PROSE_SPLIT.split(prose.lower()) if t)
        if start < 0:
            break
        end = content.find("$", start + 1)
        if end < 0:
            raise CorpusError(f"unbalanced formula delimiter at position {start}")
        tokens.extend(_TEX_TOKEN.findall(content[start + 1:end]))
        pos = end + 1
    return tokens


@dataclass
class Vocabulary:
    """Token-to-id map with reserved PAD=0 and UNK=1 entries."""

    token_to_id: dict[str, int]
    min_count: int = 1

    def __len__(self):
        return len(self.token_to_id) + 2

    def encode(self, tokens: list[str]) -> list[int]:
        t2i = self.token_to_id
        return [t2i.get(t, UNK) for t in tokens]

    def to_json(self) -> str:
        return json.dumps(
            {"min_count": self.min_count, "size": len(self), "tokens": self.token_to_id},
            sort_keys=True,
        )

    def save(self, path: str):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        obj = json.loads(text)
        return cls(token_to_id={k: int(v) for k, v in obj["tokens"].items()},
                   min_count=int(obj.get("min_count", 1)))

    @classmethod
    def load(cls, path: str) -> "Vocabulary":
        with open(path) as fh:
            return cls.from_json(fh.read())


def build_vocab(token_lists, min_count: int = 1) -> Vocabulary:
    """Assign ids by first occurrence to tokens with frequency >= min_count."""
    counts: dict[str, int] = {}
    order: list[str] = []
    for tokens in token_lists:
        for t in tokens:
            if t not in counts:
                order.append(t)
                counts[t] = 0
            counts[t] += 1
    mapping = {}
    next_id = 2  # 0/1 reserved
    for t in order:
        if counts[t] >= min_count:
            mapping[t] = next_id
            next_id += 1
    return Vocabulary(token_to_id=mapping, min_count=min_count)


@dataclass
class Exercise:
    id: str
    tokens: list[int]          # vocabulary ids, never empty
    concepts: tuple[int, ...]  # 0-indexed concept ids

    def __post_init__(self):
        if not self.tokens:
            raise CorpusError(f"exercise {self.id} has no tokens")


@dataclass
class Interaction:
    exercise_id: str
    score: int

    def __post_init__(self):
        if self.score not in (0, 1):
            raise CorpusError(f"score must be 0 or 1, got {self.score!r}")


@dataclass
class StudentSequence:
    student_id: str
    interactions: list[Interaction]

    def __len__(self):
        return len(self.interactions)


@dataclass
class Dataset:
    exercises: dict[str, Exercise]
    sequences: list[StudentSequence]
    vocab: Vocabulary


def _read_jsonl(path: str):
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc


def load_dataset(exercises_path: str, records_path: str, *, min_len: int = 10,
                 vocab: Vocabulary | None = None, min_count: int = 1,
                 K: int | None = None) -> Dataset:
    """Load and validate a corpus; students with fewer than min_len interactions are dropped.

    If `vocab` is None, one is built from the exercise contents. When K is
    given, concept ids are range-checked against it.
    """
    raw = []
    for lineno, obj in _read_jsonl(exercises_path):
        try:
            eid = str(obj["id"])
            content = str(obj["content"])
            concepts = tuple(int(c) for c in obj["concepts"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"{exercises_path}:{lineno}: bad exercise record ({exc})") from exc
        if not concepts:
            raise CorpusError(f"{exercises_path}:{lineno}: exercise {eid} has no concepts")
        if any(c < 0 for c in concepts):
            raise CorpusError(f"{exercises_path}:{lineno}: negative concept id")
        if K is not None and any(c >= K for c in concepts):
            raise CorpusError(f"{exercises_path}:{lineno}: concept id >= K={K}")
        raw.append((lineno, eid, tokenize(content), concepts))

    if not raw:
        raise CorpusError(f"{exercises_path}: no exercises")
    if vocab is None:
        vocab = build_vocab((toks for _, _, toks, _ in raw), min_count=min_count)

    exercises: dict[str, Exercise] = {}
    for lineno, eid, toks, concepts in raw:
        if eid in exercises:
            raise CorpusError(f"{exercises_path}:{lineno}: duplicate exercise id {eid}")
        exercises[eid] = Exercise(id=eid, tokens=vocab.encode(toks), concepts=concepts)

    sequences = []
    n_dropped = 0
    for lineno, obj in _read_jsonl(records_path):
        try:
            sid = str(obj["student_id"])
            items = obj["interactions"]
        except (KeyError, TypeError) as exc:
            raise CorpusError(f"{records_path}:{lineno}: bad student record ({exc})") from exc
        interactions = []
        for it in items:
            eid = str(it["exercise_id"])
            if eid not in exercises:
                raise CorpusError(
                    f"{records_path}:{lineno}: unknown exercise_id '{eid}'")
            interactions.append(Interaction(exercise_id=eid, score=int(it["score"])))
        if len(interactions) < min_len:
            n_dropped += 1
            continue
        sequences.append(StudentSequence(student_id=sid, interactions=interactions))
    if n_dropped:
        log.info("dropped %d students with fewer than %d interactions", n_dropped, min_len)

    sequences.sort(key=lambda s: s.student_id)
    return Dataset(exercises=exercises, sequences=sequences, vocab=vocab)


# -- evaluation splits -------------------------------------------------------

@dataclass
class Target:
    student_id: str
    step: int  # 0-based position: predict interactions[step] given the earlier ones


@dataclass
class Split:
    train: list[StudentSequence]
    targets: list[Target]
    mode: str
    full: dict[str, StudentSequence] = field(default_factory=dict)
    train_frac: float = 0.0


def _prefix_len(n: int, frac: float) -> int:
    return math.ceil(frac * n)


def split_general(sequences: list[StudentSequence], train_frac: float) -> Split:
    """Per student: first ceil(frac*T) interactions train, the rest are targets."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must be in (0, 1), got {train_frac}")
    train, targets, full = [], [], {}
    for seq in sequences:
        if len(seq) < 2:
            raise ValueError(f"sequence for {seq.student_id} is too short to split")
        n = _prefix_len(len(seq), train_frac)
        train.append(StudentSequence(seq.student_id, seq.interactions[:n]))
        targets.extend(Target(seq.student_id, t) for t in range(n, len(seq)))
        full[seq.student_id] = seq
    return Split(train=train, targets=targets, mode="general", full=full,
                 train_frac=train_frac)


def split_cold_start(sequences: list[StudentSequence], train_frac: float) -> Split:
    """General truncation, but keep only targets whose exercise never trains."""
    base = split_general(sequences, train_frac)
    seen = {it.exercise_id for seq in base.train for it in seq.interactions}
    targets = [t for t in base.targets
               if base.full[t.student_id].interactions[t.step].exercise_id not in seen]
    if not targets:
        log.warning("cold-start split has no unseen-exercise targets")
    return Split(train=base.train, targets=targets, mode="cold_start_exercise",
                 full=base.full, train_frac=train_frac)


def split_cold_student(sequences: list[StudentSequence], train_frac: float) -> Split:
    """Hold out whole students: the first ceil(frac*N) (by id) train in full;
    held-out students contribute targets after their own ceil(frac*T) prefix,
    which is consumed as context at evaluation time without any training."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must be in (0, 1), got {train_frac}")
    ordered = sorted(sequences, key=lambda s: s.student_id)
    n_train = _prefix_len(len(ordered), train_frac)
    train = ordered[:n_train]
    targets, full = [], {}
    for seq in ordered[n_train:]:
        n = _prefix_len(len(seq), train_frac)
        targets.extend(Target(seq.student_id, t) for t in range(n, len(seq)))
        full[seq.student_id] = seq
    return Split(train=list(train), targets=targets, mode="cold_start_student",
                 full=full, train_frac=train_frac)


def window_sequences(sequences: list[StudentSequence], max_len: int,
                     stride: int) -> list[StudentSequence]:
    """Cut training sequences longer than max_len into overlapping windows."""
    if max_len < 2 or stride < 1:
        raise ValueError("need max_len >= 2 and stride >= 1")
    out = []
    for seq in sequences:
        if len(seq) <= max_len:
            out.append(seq)
            continue
        starts = list(range(0, len(seq) - max_len + 1, stride))
        if starts[-1] + max_len < len(seq):
            starts.append(len(seq) - max_len)
        for w, s in enumerate(starts):
            out.append(StudentSequence(f"{seq.student_id}#w{w}",
                                       seq.interactions[s:s + max_len]))
    return out
