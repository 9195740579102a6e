"""Concept lookup memory: maps an exercise's concept set to an impact
distribution over the K tracked knowledge states.

A concept set becomes a size-normalized multi-hot vector, is projected to a
dk-dimensional key through the concept embedding table, and the key's inner
products against the K stored memory columns are softmaxed into the impact
weights. Singleton concept sets reduce to plain row lookup.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .optim import ParamStore, xavier_init


MEMORY_INIT_SCALE = 2.0


def init_knowledge(store: ParamStore, K: int, dk: int, rng: np.random.Generator,
                   freeze_memory: bool = False):
    """Register the concept embedding table and the memory matrix.

    The memory starts as a scaled transpose of the embedding table, so
    concept i's key initially matches its own memory column best and the
    impact softmax peaks on slot i. Slot assignment is otherwise a free
    permutation; breaking the symmetry toward the identity keeps slot i
    meaningful as "the state of concept i" (which the per-concept mastery
    probe relies on). Both matrices remain independently trainable.
    """
    W = xavier_init(K, dk, (K, dk), rng)
    store.add("kn.W_k", W)
    store.add("kn.M", Tensor(MEMORY_INIT_SCALE * W.data.T.copy()),
              trainable=not freeze_memory)


def concept_multihot(concept_sets, K: int) -> np.ndarray:
    """Rows of size-normalized multi-hot indicators, one per concept set."""
    out = np.zeros((len(concept_sets), K))
    for i, cs in enumerate(concept_sets):
        cs = tuple(cs)
        if not cs:
            raise ValueError(f"empty concept set at position {i}")
        for c in cs:
            if not 0 <= c < K:
                raise ValueError(f"concept id {c} outside [0, {K})")
            out[i, c] += 1.0 / len(cs)
    return out


def concept_embed(concepts, W_k: Tensor) -> Tensor:
    """Mean of the selected concept embedding rows: (dk,)."""
    K = W_k.shape[0]
    k = concept_multihot([concepts], K)
    return ad.matmul(Tensor(k), W_k)[0]


def knowledge_impact(v: Tensor, M: Tensor) -> Tensor:
    """Impact distribution over K states: softmax of key-memory inner products."""
    if v.ndim != 1 or v.shape[0] != M.shape[0]:
        raise ValueError(f"key length {v.shape} inconsistent with memory {M.shape}")
    logits = ad.matmul(ad.reshape(v, (1, v.shape[0])), M)
    return ad.softmax(logits, axis=1)[0]


def impact_batch(multihot: np.ndarray, W_k: Tensor, M: Tensor) -> Tensor:
    """Impacts for many concept sets at once: (n, K) rows summing to 1."""
    keys = ad.matmul(Tensor(multihot), W_k)     # (n, dk)
    return ad.softmax(ad.matmul(keys, M), axis=1)
