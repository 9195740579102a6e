"""Shared LSTM cell machinery used by the text encoder and the student tracer.

Weights are stored per gate (input matrix, recurrent matrix, bias for each of
i/f/o/c). For compute they are concatenated once per forward pass into fused
(d_in, 4d) and (d, 4d) transposed matrices so a step costs two matmuls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .optim import ParamStore, xavier_init

GATES = ("i", "f", "o", "c")


@dataclass
class LstmGates:
    """Fused per-call view of one LSTM cell's weights."""

    d: int
    ZxT: Tensor  # (d_in, 4d)
    ZhT: Tensor  # (d, 4d)
    b: Tensor    # (4d,)


def init_lstm(store: ParamStore, prefix: str, d: int, d_in: int,
              rng: np.random.Generator, in_letter: str, rec_letter: str,
              zeros: bool = False):
    """Register the 12 per-gate tensors of one cell under `prefix`."""
    for g in GATES:
        if zeros:
            zx = Tensor(np.zeros((d, d_in)))
            zh = Tensor(np.zeros((d, d)))
            b = Tensor(np.zeros(d))
        else:
            zx = xavier_init(d_in, d, (d, d_in), rng)
            zh = xavier_init(d, d, (d, d), rng)
            b = xavier_init(d, d, (d,), rng)
        store.add(f"{prefix}.Z_{in_letter}{g}", zx)
        store.add(f"{prefix}.Z_{rec_letter}{g}", zh)
        store.add(f"{prefix}.b_{g}", b)


def gates_from_store(store: ParamStore, prefix: str, in_letter: str,
                     rec_letter: str) -> LstmGates:
    zx = [store[f"{prefix}.Z_{in_letter}{g}"] for g in GATES]
    zh = [store[f"{prefix}.Z_{rec_letter}{g}"] for g in GATES]
    b = [store[f"{prefix}.b_{g}"] for g in GATES]
    return gates_from_tensors(zx, zh, b)


def gates_from_tensors(zx, zh, b) -> LstmGates:
    d = zx[0].shape[0]
    for t in zx:
        if t.shape[0] != d or t.shape[1] != zx[0].shape[1]:
            raise ValueError("inconsistent input-gate weight shapes")
    for t in zh:
        if t.shape != (d, d):
            raise ValueError(f"recurrent weights must be ({d}, {d})")
    for t in b:
        if t.shape != (d,):
            raise ValueError(f"biases must have length {d}")
    return LstmGates(
        d=d,
        ZxT=ad.transpose(ad.concat(zx, axis=0)),
        ZhT=ad.transpose(ad.concat(zh, axis=0)),
        b=ad.concat(b, axis=0),
    )


def input_proj(x: Tensor, gates: LstmGates) -> Tensor:
    """Project inputs through the fused input weights: (..., d_in) -> (..., 4d)."""
    if x.ndim < 2:
        raise ValueError("input projection expects a batched tensor")
    if x.shape[-1] != gates.ZxT.shape[0]:
        raise ValueError(f"input size {x.shape[-1]} != expected {gates.ZxT.shape[0]}")
    return ad.matmul(x, gates.ZxT)


def lstm_step(inp: Tensor, h_prev: Tensor, c_prev: Tensor, gates: LstmGates):
    """One cell update from a precomputed input contribution.

    `inp` is the already-projected input (..., 4d); `h_prev`/`c_prev` are
    (..., d). Gate order is input, forget, output, candidate:
      i,f,o = sigmoid(.); c = f*c_prev + i*tanh(.); h = o*tanh(c).
    """
    d = gates.d
    if h_prev.shape[-1] != d or inp.shape[-1] != 4 * d:
        raise ValueError("state/input sizes inconsistent with gate weights")
    g = ad.add(ad.add(inp, ad.matmul(h_prev, gates.ZhT)), gates.b)
    i = ad.sigmoid(g[..., 0:d])
    f = ad.sigmoid(g[..., d:2 * d])
    o = ad.sigmoid(g[..., 2 * d:3 * d])
    cand = ad.tanh(g[..., 3 * d:4 * d])
    c = ad.add(ad.mul(f, c_prev), ad.mul(i, cand))
    h = ad.mul(o, ad.tanh(c))
    return h, c


def lstm_cell(w: Tensor, prev_h: Tensor, prev_c: Tensor, gates: LstmGates):
    """Single-vector cell update: w is (d_in,), states are (d,)."""
    if w.ndim != 1 or prev_h.ndim != 1 or prev_c.ndim != 1:
        raise ValueError("lstm_cell expects 1-d input and state vectors")
    inp = ad.matmul(ad.reshape(w, (1, w.shape[0])), gates.ZxT)
    h, c = lstm_step(inp, ad.reshape(prev_h, (1, gates.d)),
                     ad.reshape(prev_c, (1, gates.d)), gates)
    return ad.reshape(h, (gates.d,)), ad.reshape(c, (gates.d,))
