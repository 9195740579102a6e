"""Knowledge tracing from exercise text: content-aware student models with
integrated or per-concept states and Markov or attention prediction heads,
trained by a self-contained float64 autodiff engine."""

from .config import Hyper, ModelOptions, SynthConfig, TrainConfig, VARIANTS
from .corpus import (Exercise, Interaction, StudentSequence, Vocabulary,
                     build_vocab, load_dataset, split_cold_start,
                     split_cold_student, split_general, tokenize)
from .model import KTModel, build_pack
from .train import fit, sequence_loss, train_epoch
from .checkpoint import load_checkpoint, save_checkpoint
from .evaluate import (MetricReport, attention_groups, evaluate_split,
                       export_mastery, metrics)
from .synth import generate, write_corpus, bayes_optimal_auc

__version__ = "0.1.0"

__all__ = [
    "Hyper", "ModelOptions", "SynthConfig", "TrainConfig", "VARIANTS",
    "Exercise", "Interaction", "StudentSequence", "Vocabulary",
    "build_vocab", "load_dataset", "split_cold_start", "split_cold_student",
    "split_general", "tokenize",
    "KTModel", "build_pack",
    "fit", "sequence_loss", "train_epoch",
    "load_checkpoint", "save_checkpoint",
    "MetricReport", "attention_groups", "evaluate_split", "export_mastery",
    "metrics",
    "generate", "write_corpus", "bayes_optimal_auc",
]
