"""Student state tracing over an interaction sequence.

Two state layouts share one LSTM cell:
  * integrated: a single dh-vector per student (variants eernnm/eernna);
  * per-concept: a (K, dh) matrix whose rows evolve under a shared cell, each
    slot receiving the common input scaled by its impact weight
    (variants ektm/ekta; a per-slot-weights mode gives each row its own cell).

The combined step input doubles the exercise encoding: a correct answer puts
it in the first half, a wrong answer in the second, so the input weight
matrix splits into response-specific column blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .lstm import LstmGates, gates_from_store, init_lstm, lstm_step
from .optim import ParamStore, xavier_init


def init_tracer(store: ParamStore, dh: int, dv: int, rng: np.random.Generator,
                matrix_state: bool, K: int = 1, per_slot: bool = False):
    if matrix_state and per_slot:
        for i in range(K):
            init_lstm(store, f"st.slot{i}", dh, 4 * dv, rng, "x", "h")
    else:
        init_lstm(store, "st", dh, 4 * dv, rng, "x", "h")
    if matrix_state:
        store.add("st.H0", xavier_init(dh, K, (dh, K), rng))
    else:
        store.add("st.h0", xavier_init(dh, dh, (dh,), rng))


def tracer_gates(store: ParamStore, per_slot: bool = False, K: int = 1):
    if per_slot:
        return [gates_from_store(store, f"st.slot{i}", "x", "h") for i in range(K)]
    return gates_from_store(store, "st", "x", "h")


@dataclass
class StateSnapshot:
    """State after `step` interactions; h/c for the integrated tracer,
    H/C (rows = concept slots) for the per-concept tracer. `x` records the
    exercise encoding consumed at this step (None for the prior)."""

    step: int
    h: Tensor | None = None
    c: Tensor | None = None
    H: Tensor | None = None
    C: Tensor | None = None
    x: Tensor | None = None


def initial_vector_state(h0: Tensor) -> StateSnapshot:
    dh = h0.shape[0]
    return StateSnapshot(step=0, h=h0, c=Tensor(np.zeros(dh)))


def initial_matrix_state(H0: Tensor) -> StateSnapshot:
    """H0 is stored as (dh, K); snapshots keep slots as rows: (K, dh)."""
    dh, K = H0.shape
    return StateSnapshot(step=0, H=ad.transpose(H0), C=Tensor(np.zeros((K, dh))))


def combine_input(x: Tensor, r: int) -> Tensor:
    """Response-gated doubling: r=1 -> [x, 0], r=0 -> [0, x]."""
    if r not in (0, 1):
        raise ValueError(f"score must be 0 or 1, got {r!r}")
    zeros = Tensor(np.zeros(x.shape[0]))
    return ad.concat([x, zeros], axis=0) if r == 1 else ad.concat([zeros, x], axis=0)


def step_eernn(xt: Tensor, prev: StateSnapshot, gates: LstmGates,
               x: Tensor | None = None) -> StateSnapshot:
    """Advance the integrated state by one interaction; xt is (4*dv,)."""
    if prev.h is None:
        raise ValueError("step_eernn needs a vector-state snapshot")
    inp = ad.matmul(ad.reshape(xt, (1, xt.shape[0])), gates.ZxT)
    h, c = lstm_step(inp, ad.reshape(prev.h, (1, gates.d)),
                     ad.reshape(prev.c, (1, gates.d)), gates)
    return StateSnapshot(step=prev.step + 1, h=h[0], c=c[0], x=x)


def _check_distribution(beta: Tensor):
    b = beta.data
    if abs(float(b.sum()) - 1.0) > 1e-6 or np.any(b < -1e-12):
        raise ValueError("impact weights must form a probability distribution")


def step_ekt(xt: Tensor, beta: Tensor, prev: StateSnapshot, gates,
             x: Tensor | None = None) -> StateSnapshot:
    """Advance all K concept slots; slot i sees the input scaled by beta[i].

    `gates` is a shared LstmGates or a list of K per-slot LstmGates.
    """
    if prev.H is None:
        raise ValueError("step_ekt needs a matrix-state snapshot")
    K = prev.H.shape[0]
    if beta.shape != (K,):
        raise ValueError(f"impact weights must have length {K}")
    _check_distribution(beta)
    beta_col = ad.reshape(beta, (K, 1))
    if isinstance(gates, list):
        rows_h, rows_c = [], []
        for i in range(K):
            inp = ad.matmul(ad.mul(beta_col[i:i + 1, :], ad.reshape(xt, (1, xt.shape[0]))),
                            gates[i].ZxT)
            h, c = lstm_step(inp, prev.H[i:i + 1, :], prev.C[i:i + 1, :], gates[i])
            rows_h.append(h)
            rows_c.append(c)
        return StateSnapshot(step=prev.step + 1, H=ad.concat(rows_h, axis=0),
                             C=ad.concat(rows_c, axis=0), x=x)
    proj = ad.matmul(ad.reshape(xt, (1, xt.shape[0])), gates.ZxT)  # (1, 4dh)
    inp = ad.mul(beta_col, proj)                                   # (K, 4dh)
    h, c = lstm_step(inp, prev.H, prev.C, gates)
    return StateSnapshot(step=prev.step + 1, H=h, C=c, x=x)


def aggregate_state(H: Tensor, beta: Tensor) -> Tensor:
    """Impact-weighted combination of concept slots: (K, dh) x (K,) -> (dh,)."""
    if H.ndim != 2 or beta.shape != (H.shape[0],):
        raise ValueError(f"shape mismatch: H {H.shape} vs beta {beta.shape}")
    return ad.matmul(ad.reshape(beta, (1, H.shape[0])), H)[0]


# -- batched runners (training/evaluation hot path) ---------------------------

def broadcast_rows(row: Tensor, n: int) -> Tensor:
    """Tile a (d,)/(K, d) tensor into (n, d)/(n, K, d) with summed gradient."""
    ones = Tensor(np.ones((n, 1)))
    if row.ndim == 1:
        return ad.matmul(ones, ad.reshape(row, (1, row.shape[0])))
    flat = ad.matmul(ones, ad.reshape(row, (1, row.shape[0] * row.shape[1])))
    return ad.reshape(flat, (n,) + row.shape)


def run_vector_tracer(proj: Tensor, h0: Tensor, gates: LstmGates):
    """Unroll the integrated tracer over a packed batch.

    proj: (B, T, 4*dh) precomputed input projections. Returns
    (pred, hist): states before each interaction (prior first) and after,
    both (B, T, dh).
    """
    B, T, _ = proj.shape
    h = broadcast_rows(h0, B)
    c = Tensor(np.zeros((B, gates.d)))
    pred, hist = [], []
    for t in range(T):
        pred.append(h)
        h, c = lstm_step(proj[:, t], h, c, gates)
        hist.append(h)
    return ad.stack(pred, axis=1), ad.stack(hist, axis=1)


def run_matrix_tracer(proj, beta_seq: Tensor, H0: Tensor, gates):
    """Unroll the per-concept tracer over a packed batch.

    proj: (B, T, 4*dh) shared-cell projections, or a list of K such tensors in
    per-slot mode. beta_seq: (B, T, K). Returns (pred, hist), both
    (B, T, K, dh): states before and after each interaction.
    """
    per_slot = isinstance(gates, list)
    if per_slot:
        B, T, _ = proj[0].shape
        d = gates[0].d
    else:
        B, T, _ = proj.shape
        d = gates.d
    K = beta_seq.shape[2]
    H = broadcast_rows(ad.transpose(H0), B)            # (B, K, dh)
    C = Tensor(np.zeros((B, K, d)))
    pred, hist = [], []
    for t in range(T):
        pred.append(H)
        if per_slot:
            slots_h, slots_c = [], []
            for i in range(K):
                inp = ad.mul(beta_seq[:, t, i:i + 1], proj[i][:, t])   # (B, 4dh)
                h_i, c_i = lstm_step(inp, H[:, i], C[:, i], gates[i])
                slots_h.append(h_i)
                slots_c.append(c_i)
            H = ad.stack(slots_h, axis=1)
            C = ad.stack(slots_c, axis=1)
        else:
            inp = ad.mul(ad.reshape(beta_seq[:, t], (B, K, 1)),
                         ad.reshape(proj[:, t], (B, 1, 4 * d)))        # (B, K, 4dh)
            H, C = lstm_step(inp, H, C, gates)
        hist.append(H)
    return ad.stack(pred, axis=1), ad.stack(hist, axis=1)
