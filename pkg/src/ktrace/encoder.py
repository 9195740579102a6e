"""Exercise content encoder: bidirectional LSTM over word vectors, max-pooled.

Each exercise's token ids are embedded, run through forward and backward LSTM
passes, the two directions concatenated per token, and the per-token vectors
merged by element-wise max into one content vector of length 2*dv. Pad tokens
never enter the cell: exercises are bucketed by exact length and each bucket
is encoded as its own batch.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .lstm import LstmGates, gates_from_store, init_lstm, input_proj, lstm_step
from .optim import ParamStore, xavier_init


def init_encoder(store: ParamStore, vocab_size: int, d0: int, dv: int,
                 rng: np.random.Generator, trainable_words: bool = True):
    word = xavier_init(d0, d0, (vocab_size, d0), rng)
    store.add("word_emb", word, trainable=trainable_words)
    init_lstm(store, "enc.fw", dv, d0, rng, in_letter="w", rec_letter="v")
    init_lstm(store, "enc.bw", dv, d0, rng, in_letter="w", rec_letter="v")


def encoder_gates(store: ParamStore):
    fw = gates_from_store(store, "enc.fw", "w", "v")
    bw = gates_from_store(store, "enc.bw", "w", "v")
    return fw, bw


def _run_direction(proj: Tensor, gates: LstmGates, n: int, length: int,
                   reverse: bool) -> list[Tensor]:
    """Unroll one direction over `length` steps; returns states in token order."""
    h = Tensor(np.zeros((n, gates.d)))
    c = Tensor(np.zeros((n, gates.d)))
    states: list[Tensor] = [None] * length
    steps = range(length - 1, -1, -1) if reverse else range(length)
    for m in steps:
        h, c = lstm_step(proj[:, m], h, c, gates)
        states[m] = h
    return states


def encode_batch(token_lists: list[list[int]], word_emb: Tensor,
                 fw: LstmGates, bw: LstmGates) -> Tensor:
    """Encode many exercises; returns (n, 2*dv) in input order."""
    if not token_lists:
        raise ValueError("no exercises to encode")
    buckets: dict[int, list[int]] = {}
    for i, toks in enumerate(token_lists):
        if not toks:
            raise ValueError(f"exercise at position {i} has no tokens")
        buckets.setdefault(len(toks), []).append(i)

    pieces = []
    order = []
    for length in sorted(buckets):
        idxs = buckets[length]
        ids = np.array([token_lists[i] for i in idxs], dtype=np.intp)
        w = ad.gather_rows(word_emb, ids)                      # (g, length, d0)
        fw_states = _run_direction(input_proj(w, fw), fw, len(idxs), length, False)
        bw_states = _run_direction(input_proj(w, bw), bw, len(idxs), length, True)
        per_token = [ad.concat([fw_states[m], bw_states[m]], axis=1)
                     for m in range(length)]
        pooled = ad.max_(ad.stack(per_token, axis=1), axis=1)  # (g, 2dv)
        pieces.append(pooled)
        order.extend(idxs)

    merged = pieces[0] if len(pieces) == 1 else ad.concat(pieces, axis=0)
    inverse = np.argsort(np.asarray(order, dtype=np.intp))
    return ad.gather_rows(merged, inverse)


def encode_exercise(tokens: list[int], word_emb: Tensor, fw: LstmGates,
                    bw: LstmGates) -> Tensor:
    """Content vector of one exercise: (2*dv,); rejects empty token lists."""
    if not tokens:
        raise ValueError("cannot encode an exercise without tokens")
    return encode_batch([tokens], word_emb, fw, bw)[0]
