"""Prediction heads: last-state (Markov) and cosine-attention readouts, plus
the per-concept mastery probe.

All four variants share one two-layer head: ReLU over the concatenated
[state, next-exercise encoding], then a sigmoid unit. Attention variants
replace the last state with a cosine-weighted sum of all historical states
(slot-wise for the per-concept tracer); the raw cosines are kept unnormalized
by default. Mastery probing reuses the trained head with a zeroed exercise
encoding and a one-hot impact vector, so it is exactly the Markov prediction
path under a masked input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .optim import ParamStore, xavier_init
from .tracer import aggregate_state


@dataclass
class HeadParams:
    W1: Tensor  # (dy, dh + 2dv)
    b1: Tensor  # (dy,)
    W2: Tensor  # (1, dy)
    b2: Tensor  # (1,)


def init_head(store: ParamStore, dy: int, dh: int, dv: int,
              rng: np.random.Generator, ekt: bool):
    """EERNN heads are named W1/W2, EKT heads W3/W4 (one pair per model)."""
    a, b = ("W3", "W4") if ekt else ("W1", "W2")
    d_in = dh + 2 * dv
    store.add(f"head.{a}", xavier_init(d_in, dy, (dy, d_in), rng))
    store.add(f"head.b{a[1]}", xavier_init(dy, dy, (dy,), rng))
    store.add(f"head.{b}", xavier_init(dy, 1, (1, dy), rng))
    store.add(f"head.b{b[1]}", xavier_init(1, 1, (1,), rng))


def head_from_store(store: ParamStore, ekt: bool) -> HeadParams:
    a, b = ("W3", "W4") if ekt else ("W1", "W2")
    return HeadParams(W1=store[f"head.{a}"], b1=store[f"head.b{a[1]}"],
                      W2=store[f"head.{b}"], b2=store[f"head.b{b[1]}"])


PROB_FLOOR = 1e-7


def head_probs(feats: Tensor, head: HeadParams, *, dropout_p: float = 0.0,
               rng: np.random.Generator | None = None,
               training: bool = False) -> Tensor:
    """Batched head: (n, dh+2dv) -> probabilities (n,) strictly inside (0,1).

    The sigmoid output is clamped to [1e-7, 1-1e-7] so saturation can never
    round a probability onto the interval boundary.
    """
    y = ad.relu(ad.add(ad.matmul(feats, ad.transpose(head.W1)), head.b1))
    if training and dropout_p > 0.0:
        y = ad.dropout(y, dropout_p, rng, training=True)
    z = ad.add(ad.matmul(y, ad.transpose(head.W2)), head.b2)
    p = ad.sigmoid(ad.reshape(z, (feats.shape[0],)))
    return ad.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)


def predict_markov(state, x_next: Tensor, head: HeadParams,
                   beta: Tensor | None = None) -> Tensor:
    """Score probability from the current state and the next exercise encoding.

    `state` is either an integrated (dh,) vector or a per-concept (K, dh)
    matrix, in which case `beta` (the next exercise's impact weights) melds
    the slots first.
    """
    if isinstance(state, Tensor) and state.ndim == 2:
        if beta is None:
            raise ValueError("matrix state requires impact weights")
        s = aggregate_state(state, beta)
    else:
        s = state
    if s.shape[0] + x_next.shape[0] != head.W1.shape[1]:
        raise ValueError("state/exercise sizes inconsistent with head weights")
    feats = ad.reshape(ad.concat([s, x_next], axis=0), (1, head.W1.shape[1]))
    return head_probs(feats, head)[0]


def attention_weights(x_next: Tensor, history: Tensor) -> Tensor:
    """Raw cosine similarity of the next encoding to each historical one.

    history is (T, 2dv); output (T,), unnormalized and possibly negative.
    """
    if history.ndim != 2 or history.shape[0] < 1:
        raise ValueError("history must be a nonempty (T, 2dv) stack")
    u_next = ad.normalize_rows(x_next)
    u_hist = ad.normalize_rows(history)
    return ad.sum_(ad.mul(u_hist, ad.reshape(u_next, (1, x_next.shape[0]))), axis=1)


def attend_state(alpha: Tensor, states: Tensor):
    """Weighted sum of historical states: (T,) x (T, dh) -> (dh,), or
    slot-wise (T,) x (T, K, dh) -> (K, dh)."""
    T = alpha.shape[0]
    if states.shape[0] != T:
        raise ValueError(f"{T} weights for {states.shape[0]} states")
    a = ad.reshape(alpha, (1, T))
    if states.ndim == 2:
        return ad.matmul(a, states)[0]
    K, dh = states.shape[1], states.shape[2]
    flat = ad.matmul(a, ad.reshape(states, (T, K * dh)))
    return ad.reshape(flat, (K, dh))


def estimate_mastery(H: Tensor, concept: int, head: HeadParams) -> Tensor:
    """Mastery level of one concept: the Markov head under a one-hot impact
    vector and a zeroed exercise encoding ("what if no exercise were posed")."""
    K = H.shape[0]
    if not 0 <= concept < K:
        raise ValueError(f"concept id {concept} outside [0, {K})")
    one_hot = np.zeros(K)
    one_hot[concept] = 1.0
    x_zero = Tensor(np.zeros(head.W1.shape[1] - H.shape[1]))
    return predict_markov(H, x_zero, head, beta=Tensor(one_hot))


@dataclass
class PredictionTrace:
    """One prediction with everything needed to explain it."""

    r_hat: float
    variant: str
    alpha: np.ndarray | None = None  # cosine weights over the history
    beta: np.ndarray | None = None   # impact weights of the target exercise
