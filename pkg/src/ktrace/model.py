"""The four knowledge-tracing variants behind one train/predict interface.

Variant naming: the first part picks the student-state layout (``eernn`` =
one integrated vector, ``ekt`` = one state row per concept), the trailing
letter picks the prediction strategy (``m`` = last state, ``a`` = cosine
attention over all historical states).

The batched forward pass is teacher-forced: at step t the model predicts the
score of interaction t from the state after t-1 interactions (the trained
prior for t=0), then consumes the observed (encoding, score) pair. Attention
is computed for all steps at once as a masked cosine Gram matrix followed by
one batched matmul against the stacked history.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad
from .config import Hyper, ModelOptions, VARIANTS
from .corpus import Exercise, StudentSequence, Vocabulary
from .encoder import encode_batch, encoder_gates, init_encoder
from .knowledge import concept_multihot, impact_batch, init_knowledge
from .optim import ParamStore
from .predict import PredictionTrace, estimate_mastery, head_from_store, head_probs, init_head
from .tracer import init_tracer, run_matrix_tracer, run_vector_tracer, tracer_gates
from .lstm import input_proj

PROB_CLAMP = 1e-7


@dataclass
class Pack:
    """A padded batch of interaction sequences plus its local exercise table."""

    student_ids: list[str]
    ex_rows: np.ndarray            # (B, T) row into the unique table; last row = pad
    scores: np.ndarray             # (B, T) float 0/1, pads 0
    mask: np.ndarray               # (B, T) 1 where a real interaction exists
    unique_ids: list[str]
    token_lists: list[list[int]]
    concept_sets: list[tuple[int, ...]]
    lengths: np.ndarray


@dataclass
class ForwardResult:
    probs: Tensor                      # (B, T)
    loss: Tensor                       # scalar, mean over valid steps
    per_seq: Tensor                    # (B,) per-sequence loss sums
    mask: np.ndarray
    scores: np.ndarray
    attn: np.ndarray | None = None     # (B, T, T) weights actually applied
    beta: np.ndarray | None = None     # (B, T, K)
    pred_states: np.ndarray | None = None
    hist_states: np.ndarray | None = None


@dataclass
class EncodingCache:
    """Frozen-parameter exercise encodings for evaluation-time reuse."""

    x: dict[str, np.ndarray]
    beta: dict[str, np.ndarray] | None = None


def build_pack(sequences: list[StudentSequence], exercises: dict[str, Exercise]) -> Pack:
    if not sequences:
        raise ValueError("cannot pack an empty batch")
    B = len(sequences)
    T = max(len(s) for s in sequences)
    unique: dict[str, int] = {}
    for seq in sequences:
        for it in seq.interactions:
            if it.exercise_id not in unique:
                if it.exercise_id not in exercises:
                    raise KeyError(f"no content for exercise '{it.exercise_id}'")
                unique[it.exercise_id] = len(unique)
    pad_row = len(unique)
    ex_rows = np.full((B, T), pad_row, dtype=np.intp)
    scores = np.zeros((B, T))
    mask = np.zeros((B, T))
    lengths = np.zeros(B, dtype=np.intp)
    for b, seq in enumerate(sequences):
        lengths[b] = len(seq)
        for t, it in enumerate(seq.interactions):
            ex_rows[b, t] = unique[it.exercise_id]
            scores[b, t] = it.score
            mask[b, t] = 1.0
    ids = list(unique)
    return Pack(student_ids=[s.student_id for s in sequences], ex_rows=ex_rows,
                scores=scores, mask=mask, unique_ids=ids,
                token_lists=[exercises[i].tokens for i in ids],
                concept_sets=[exercises[i].concepts for i in ids], lengths=lengths)


class KTModel:
    """One configured variant: parameters, vocabulary, and forward passes."""

    def __init__(self, variant: str, hyper: Hyper, vocab: Vocabulary,
                 options: ModelOptions | None = None,
                 rng: np.random.Generator | None = None):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        self.hyper = hyper
        self.vocab = vocab
        self.options = options or ModelOptions()
        self.store = ParamStore()
        self.rng_state: dict | None = None
        if rng is None:
            rng = np.random.default_rng(hyper.seed)
        h = hyper
        init_encoder(self.store, len(vocab), h.d0, h.dv, rng,
                     trainable_words=not self.options.freeze_word_emb)
        if self.is_ekt:
            init_knowledge(self.store, h.K, h.dk, rng,
                           freeze_memory=self.options.freeze_memory)
        init_tracer(self.store, h.dh, h.dv, rng, matrix_state=self.is_ekt,
                    K=h.K, per_slot=self.options.per_slot_weights)
        init_head(self.store, h.dy, h.dh, h.dv, rng, ekt=self.is_ekt)

    @property
    def is_ekt(self) -> bool:
        return self.variant.startswith("ekt")

    @property
    def is_attention(self) -> bool:
        return self.variant.endswith("a")

    def head(self):
        return head_from_store(self.store, ekt=self.is_ekt)

    # -- encoding ------------------------------------------------------------

    def _encode_unique(self, pack: Pack, cache: EncodingCache | None):
        """Local exercise table: ((U+1, 2dv) encodings, (U+1, K) impacts or None),
        each with a trailing pad row (zeros / uniform)."""
        h = self.hyper
        if cache is not None:
            x = Tensor(np.vstack([np.stack([cache.x[i] for i in pack.unique_ids]),
                                  np.zeros((1, 2 * h.dv))]))
            beta = None
            if self.is_ekt:
                beta = Tensor(np.vstack([np.stack([cache.beta[i] for i in pack.unique_ids]),
                                         np.full((1, h.K), 1.0 / h.K)]))
            return x, beta
        fw, bw = encoder_gates(self.store)
        enc = encode_batch(pack.token_lists, self.store["word_emb"], fw, bw)
        x = ad.concat([enc, Tensor(np.zeros((1, 2 * h.dv)))], axis=0)
        beta = None
        if self.is_ekt:
            mh = concept_multihot(pack.concept_sets, h.K)
            bu = impact_batch(mh, self.store["kn.W_k"], self.store["kn.M"])
            beta = ad.concat([bu, Tensor(np.full((1, h.K), 1.0 / h.K))], axis=0)
        return x, beta

    def precompute_encodings(self, exercises: dict[str, Exercise],
                             ids=None, chunk: int = 512) -> EncodingCache:
        """Encode exercises once under frozen parameters (inference only)."""
        ids = list(exercises) if ids is None else list(ids)
        cache = EncodingCache(x={}, beta={} if self.is_ekt else None)
        fw_bw = None
        with no_grad():
            fw, bw = encoder_gates(self.store)
            fw_bw = (fw, bw)
            for lo in range(0, len(ids), chunk):
                part = ids[lo:lo + chunk]
                enc = encode_batch([exercises[i].tokens for i in part],
                                   self.store["word_emb"], *fw_bw)
                for i, eid in enumerate(part):
                    cache.x[eid] = enc.data[i]
                if self.is_ekt:
                    mh = concept_multihot([exercises[i].concepts for i in part],
                                          self.hyper.K)
                    bu = impact_batch(mh, self.store["kn.W_k"], self.store["kn.M"])
                    for i, eid in enumerate(part):
                        cache.beta[eid] = bu.data[i]
        return cache

    # -- forward ---------------------------------------------------------------

    def forward_pack(self, pack: Pack, *, training: bool = False,
                     rng: np.random.Generator | None = None,
                     cache: EncodingCache | None = None,
                     capture_states: bool = False) -> ForwardResult:
        if training and rng is None:
            raise ValueError("training forward needs an RNG for dropout")
        h = self.hyper
        B, T = pack.ex_rows.shape
        x_table, beta_table = self._encode_unique(pack, cache)
        x_seq = ad.gather_rows(x_table, pack.ex_rows)                 # (B, T, 2dv)
        beta_seq = None
        if self.is_ekt:
            beta_seq = ad.gather_rows(beta_table, pack.ex_rows)      # (B, T, K)

        r3 = pack.scores[:, :, None]
        xt = ad.concat([ad.mul(x_seq, Tensor(r3)),
                        ad.mul(x_seq, Tensor(1.0 - r3))], axis=2)     # (B, T, 4dv)

        gates = tracer_gates(self.store, per_slot=self.options.per_slot_weights,
                             K=h.K if self.is_ekt else 1)
        if isinstance(gates, list):
            proj = [input_proj(xt, g) for g in gates]
        else:
            proj = input_proj(xt, gates)

        if self.is_ekt:
            pred, hist = run_matrix_tracer(proj, beta_seq, self.store["st.H0"], gates)
        else:
            pred, hist = run_vector_tracer(proj, self.store["st.h0"], gates)

        if self.is_attention:
            state, attn = self._attend(x_seq, hist, B, T)
        else:
            state, attn = pred, None

        if self.is_ekt:
            b4 = ad.reshape(beta_seq, (B, T, h.K, 1))
            state = ad.sum_(ad.mul(b4, state), axis=2)               # (B, T, dh)

        feats = ad.reshape(ad.concat([state, x_seq], axis=2),
                           (B * T, h.dh + 2 * h.dv))
        probs = ad.reshape(
            head_probs(feats, self.head(), dropout_p=h.dropout_p, rng=rng,
                       training=training),
            (B, T))

        loss, per_seq = masked_nll(probs, pack.scores, pack.mask)
        res = ForwardResult(probs=probs, loss=loss, per_seq=per_seq,
                            mask=pack.mask, scores=pack.scores,
                            attn=None if attn is None else attn.data,
                            beta=None if beta_seq is None else beta_seq.data)
        if capture_states:
            res.pred_states = pred.data
            res.hist_states = hist.data
        return res

    def _attend(self, x_seq: Tensor, hist: Tensor, B: int, T: int):
        """Attention states for every step at once.

        Row t of the (T, T) weight matrix holds cos(x_t, x_j) for j < t; the
        empty first row falls back to the trained prior state.
        """
        h = self.hyper
        units = ad.normalize_rows(x_seq)
        gram = ad.matmul(units, ad.transpose(units, (0, 2, 1)))      # (B, T, T)
        lower = np.tril(np.ones((T, T)), k=-1)
        if self.options.normalize_attention:
            neg = Tensor((1.0 - lower) * -1e30)
            attn = ad.mul(ad.softmax(ad.add(gram, neg), axis=2), Tensor(lower))
        else:
            attn = ad.mul(gram, Tensor(lower))

        if self.is_ekt:
            flat_hist = ad.reshape(hist, (B, T, h.K * h.dh))
            prior = ad.reshape(ad.transpose(self.store["st.H0"]), (1, h.K * h.dh))
        else:
            flat_hist = hist
            prior = ad.reshape(self.store["st.h0"], (1, h.dh))
        att = ad.matmul(attn, flat_hist)                              # (B, T, S)
        row0 = np.zeros((T, 1))
        row0[0, 0] = 1.0
        att = ad.add(att, ad.matmul(Tensor(row0), prior))
        if self.is_ekt:
            att = ad.reshape(att, (B, T, h.K, h.dh))
        return att, attn

    # -- inference helpers -------------------------------------------------------

    def predict_next(self, history, exercises: dict[str, Exercise],
                     next_exercise_id: str) -> PredictionTrace:
        """Probability of a correct answer on a candidate exercise.

        `history` is a list of Interactions (may be empty: the prior answers).
        """
        from .corpus import Interaction
        seq = StudentSequence("_query", list(history)
                              + [Interaction(next_exercise_id, 0)])
        pack = build_pack([seq], exercises)
        with no_grad():
            out = self.forward_pack(pack)
        t = len(history)
        trace = PredictionTrace(r_hat=float(out.probs.data[0, t]), variant=self.variant)
        if self.is_attention and t > 0:
            trace.alpha = out.attn[0, t, :t].copy()
        if self.is_ekt:
            trace.beta = out.beta[0, t].copy()
        return trace

    def trace_states(self, interactions, exercises: dict[str, Exercise]) -> np.ndarray:
        """States after 0..T interactions: (T+1, dh) or (T+1, K, dh)."""
        seq = StudentSequence("_trace", list(interactions))
        pack = build_pack([seq], exercises)
        with no_grad():
            out = self.forward_pack(pack, capture_states=True)
        prior = out.pred_states[0, 0:1]
        return np.concatenate([prior, out.hist_states[0]], axis=0)

    def mastery_from_state(self, H: np.ndarray, concept: int) -> float:
        """Mastery level in (0,1) for one concept slot of a (K, dh) state."""
        if not self.is_ekt:
            raise ValueError("mastery estimation needs a per-concept variant")
        with no_grad():
            return estimate_mastery(Tensor(H), concept, self.head()).item()


def masked_nll(probs: Tensor, scores: np.ndarray, mask: np.ndarray):
    """Per-sequence negative log likelihood with pad masking.

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs. Returns
    (mean loss per valid step, per-sequence loss sums).
    """
    p = ad.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    ll = ad.add(ad.mul(Tensor(scores), ad.log(p)),
                ad.mul(Tensor(1.0 - scores), ad.log(ad.sub(1.0, p))))
    nll = ad.mul(ll, Tensor(-mask))
    per_seq = ad.sum_(nll, axis=1)
    loss = ad.mul(ad.sum_(per_seq), 1.0 / max(1.0, float(mask.sum())))
    return loss, per_seq
