"""Dataclass configuration objects shared across the package."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

VARIANTS = ("eernnm", "eernna", "ektm", "ekta")


@dataclass
class Hyper:
    """Model dimensions plus optimizer and batching scalars.

    K (number of tracked concepts) comes from the dataset configuration and
    has no universal default. The dimension defaults mirror the reference
    setting: 50-d word vectors, 100-d encoder and student hidden states,
    25-d concept keys, 50-d prediction hidden layer, batches of 32 and
    dropout 0.1. lr/epoch settings are artifact defaults, not sourced values.
    """

    K: int
    d0: int = 50
    dv: int = 100
    dh: int = 100
    dk: int = 25
    dy: int = 50
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dropout_p: float = 0.1
    batch: int = 32
    seed: int = 0

    def __post_init__(self):
        for name in ("K", "d0", "dv", "dh", "dk", "dy", "batch"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Hyper":
        return cls(**d)


@dataclass
class ModelOptions:
    """Behavioral switches that live with the model (saved in checkpoints)."""

    per_slot_weights: bool = False     # separate student-LSTM weights per concept slot
    normalize_attention: bool = False  # softmax over history cosines instead of raw weights
    freeze_memory: bool = False        # exclude the concept memory matrix from training
    freeze_word_emb: bool = False      # exclude word embeddings from training

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelOptions":
        return cls(**d)


@dataclass
class TrainConfig:
    """One training run: variant, hyperparameters, schedule, checkpointing."""

    variant: str
    hyper: Hyper
    epochs: int = 20
    patience: int = 5
    clip_norm: float | None = None
    checkpoint_path: str | None = None
    window_len: int = 200     # training sequences longer than this are windowed
    window_stride: int = 100
    options: ModelOptions = field(default_factory=ModelOptions)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class SynthConfig:
    """Synthetic exercising-corpus generator settings (see synth module)."""

    n_students: int = 500
    n_exercises: int = 300
    K: int = 6
    themes_per_concept: int = 8
    difficulty_range: tuple[float, float] = (0.05, 0.95)
    difficulty_bins: int = 8
    learn_rate: float = 0.06
    slip: float = 0.04
    guess: float = 0.10
    discrimination: float = 5.0
    mean_seq_len: int = 60
    min_seq_len: int = 30
    max_seq_len: int = 100
    multi_concept_prob: float = 0.15
    cold_start_frac: float = 0.10
    concept_streak: float = 0.55  # prob. the next exercise keeps the current concept
    filler_vocab: int = 40
    seed: int = 7

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        for name in ("learn_rate", "slip", "guess", "multi_concept_prob",
                     "cold_start_frac", "concept_streak"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")
        lo, hi = self.difficulty_range
        if not (0.0 <= lo < hi <= 1.0):
            raise ValueError(f"bad difficulty_range {self.difficulty_range}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["difficulty_range"] = list(self.difficulty_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "difficulty_range" in d:
            d["difficulty_range"] = tuple(d["difficulty_range"])
        return cls(**d)
