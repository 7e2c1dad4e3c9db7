"""Single-head scaled dot-product attention, self/cross attention blocks and
the two-arm co-attention fusion block.

Sequences are (N, d) or batched (B, N, d); masks are (N,) or (B, N) booleans
with True on valid positions.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError
from .numcore import (FeedForward, LayerNorm, Linear, Module, Tensor, as_tensor, concat,
                      dropout, masked_rows, softmax_rows)

MASK_FILL = -1e9


def _norm_mask(mask, shape):
    lead = shape[:-1]
    if mask is None:
        return np.ones(lead, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != lead:
        raise ShapeError(f"mask shape {mask.shape} does not match sequence shape {shape}")
    if not mask.any(axis=-1).all():
        raise ContractError("attention over a fully masked sequence")
    return mask


def attention_weights(Q, K, mask=None):
    Q, K = as_tensor(Q), as_tensor(K)
    mask = _norm_mask(mask, K.shape)
    d_k = Q.shape[-1]
    scores = (Q @ K.swapaxes(-1, -2)) * (1.0 / np.sqrt(d_k))
    # scores toward masked keys get a large negative constant
    bias = np.where(mask, 0.0, MASK_FILL).astype(scores.dtype)[..., None, :]
    return softmax_rows(scores + bias), mask


def scaled_dot_attention(Q, K, V, mask=None):
    """``softmax(Q K^T / sqrt(d_k)) V`` over valid keys; masked query rows are zero."""
    Q, K, V = as_tensor(Q), as_tensor(K), as_tensor(V)
    if Q.shape[-1] != K.shape[-1] or K.shape != V.shape or Q.shape[:-2] != K.shape[:-2]:
        raise ShapeError(f"attention operands do not conform: Q{Q.shape} K{K.shape} V{V.shape}")
    if Q.shape[-2] != K.shape[-2]:
        raise ShapeError("query and key sequences must have the same length")
    w, mask = attention_weights(Q, K, mask)
    return masked_rows(w @ V, mask)


class AttentionParams(Module):
    """Query/key/value projections (d x d, with bias) and the output layer norm."""

    def __init__(self, d_model, rng, dtype=np.float32):
        self.d_model = d_model
        self.wq = Linear(d_model, d_model, rng, dtype)
        self.wk = Linear(d_model, d_model, rng, dtype)
        self.wv = Linear(d_model, d_model, rng, dtype)
        self.norm = LayerNorm(d_model, dtype)

    def __call__(self, query_seq, kv_seq=None, mask=None):
        return cross_attention_block(query_seq, query_seq if kv_seq is None else kv_seq, self, mask)


def cross_attention_block(query_seq, kv_seq, p, mask=None):
    """``LayerNorm(Q + Attention(Q, K, V))`` with Q from ``query_seq`` and K, V from ``kv_seq``.

    Residual then normalize (post-norm). Masked rows of the result are zero.
    """
    query_seq, kv_seq = as_tensor(query_seq), as_tensor(kv_seq)
    if query_seq.shape != kv_seq.shape:
        raise ShapeError(f"query {query_seq.shape} and key/value {kv_seq.shape} sequences differ")
    if query_seq.shape[-1] != p.d_model:
        raise ShapeError(f"sequence width {query_seq.shape[-1]} != d_model {p.d_model}")
    mask = _norm_mask(mask, query_seq.shape)
    q = p.wq(query_seq)
    k = p.wk(kv_seq)
    v = p.wv(kv_seq)
    out = p.norm(q + scaled_dot_attention(q, k, v, mask))
    return masked_rows(out, mask)


def self_attention_block(x, p, mask=None):
    return cross_attention_block(x, x, p, mask)


@dataclass
class CrossModalPair:
    audio_seq: Tensor
    text_seq: Tensor
    mask: np.ndarray = None

    def __post_init__(self):
        self.audio_seq = as_tensor(self.audio_seq)
        self.text_seq = as_tensor(self.text_seq)
        if self.audio_seq.shape != self.text_seq.shape:
            raise ShapeError(
                f"modalities disagree: audio {self.audio_seq.shape} vs text {self.text_seq.shape}")
        self.mask = _norm_mask(self.mask, self.audio_seq.shape)


class CoAttentionFusion(Module):
    """Two cross-then-self attention arms, concatenated, then a position-wise
    feed-forward (2d -> d_ff -> d) and a linear classifier.

    Arm "audio" queries text; arm "text" queries audio. Arms do not share
    parameters.
    """

    def __init__(self, d_model, num_classes, rng, d_ff=None, dropout=0.1, dtype=np.float32):
        self.d_model = d_model
        self.dropout = dropout
        d_ff = d_ff or 4 * d_model
        self.cross_audio = AttentionParams(d_model, rng, dtype)
        self.self_audio = AttentionParams(d_model, rng, dtype)
        self.cross_text = AttentionParams(d_model, rng, dtype)
        self.self_text = AttentionParams(d_model, rng, dtype)
        self.ff = FeedForward(2 * d_model, d_ff, d_model, rng, dtype)
        self.head = Linear(d_model, num_classes, rng, dtype)

    def fuse(self, pair):
        """Concatenated arm outputs, (..., N, 2d)."""
        m = pair.mask
        arm_a = self_attention_block(cross_attention_block(pair.audio_seq, pair.text_seq, self.cross_audio, m),
                                     self.self_audio, m)
        arm_t = self_attention_block(cross_attention_block(pair.text_seq, pair.audio_seq, self.cross_text, m),
                                     self.self_text, m)
        return concat([arm_a, arm_t], axis=-1)

    def __call__(self, audio_seq, text_seq, mask=None, rng=None):
        """Returns (fused embedding (..., N, d), logits (..., N, C))."""
        pair = CrossModalPair(audio_seq, text_seq, mask)
        h = self.fuse(pair)
        if self.training and rng is not None:
            h = dropout(h, self.dropout, rng)
        emb = masked_rows(self.ff(h), pair.mask)
        return emb, self.head(emb)


def co_attention_fuse(pair, params):
    """Functional form of :meth:`CoAttentionFusion.fuse`."""
    return params.fuse(pair)
