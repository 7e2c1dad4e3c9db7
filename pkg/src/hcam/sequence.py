"""Utterance encoders (stage I) and the contextual GRU (stage II)."""
import numpy as np

from .attention import AttentionParams, self_attention_block
from .errors import ConfigError, ShapeError
from .numcore import (BiGRU, FeedForward, Linear, Module, Tensor, as_tensor, concat, conv1d,
                      dropout, masked_rows, relu, tanh, uniform_init, zeros_param)


def _check_frames(x, mask, in_dim):
    x = as_tensor(x)
    if x.ndim == 2:
        x = x.reshape(1, *x.shape)
        mask = None if mask is None else np.asarray(mask, dtype=bool)[None]
    if x.ndim != 3:
        raise ShapeError(f"expected (B, T, D) frames, got {x.shape}")
    if x.shape[1] < 1:
        raise ShapeError("utterance has no frames")
    if x.shape[2] != in_dim:
        raise ShapeError(f"frame width {x.shape[2]} != encoder input_dim {in_dim}")
    if mask is None:
        mask = np.ones(x.shape[:2], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape[:2]:
        raise ShapeError(f"mask shape {mask.shape} != {x.shape[:2]}")
    if not mask.any(axis=1).all():
        raise ShapeError("utterance with zero valid frames")
    return x, mask


class Conv1dLayer(Module):
    def __init__(self, c_in, c_out, kernel, rng, dtype=np.float32):
        self.weight = uniform_init(rng, (c_out, c_in, kernel), c_in * kernel, dtype)
        self.bias = zeros_param((c_out,), dtype)
        self.padding = kernel // 2

    def __call__(self, x):
        return conv1d(x, self.weight, self.bias, self.padding)


class AudioUtteranceEncoder(Module):
    """Conv1d stack over frames -> masked mean pool -> linear classifier.

    The pooled vector is the utterance embedding.
    """

    def __init__(self, input_dim, d_model, num_classes, rng, n_layers=2, kernel=3,
                 dropout=0.1, dtype=np.float32):
        if kernel % 2 != 1:
            raise ConfigError("kernel size must be odd to preserve length")
        self.input_dim = input_dim
        self.d_model = d_model
        self.dropout = dropout
        self.convs = [Conv1dLayer(input_dim if i == 0 else d_model, d_model, kernel, rng, dtype)
                      for i in range(n_layers)]
        self.head = Linear(d_model, num_classes, rng, dtype)

    def embed(self, frames, mask=None):
        x, mask = _check_frames(frames, mask, self.input_dim)
        m = mask.astype(x.dtype)[..., None]
        h = x * m
        for conv in self.convs:
            # re-mask so padding frames never leak into valid ones through the kernel
            h = relu(conv(h)) * m
        counts = mask.sum(axis=1, keepdims=True).astype(x.dtype)
        return h.sum(axis=1) * (1.0 / counts)

    def __call__(self, frames, mask=None, rng=None):
        emb = self.embed(frames, mask)
        h = dropout(emb, self.dropout, rng) if (self.training and rng is not None) else emb
        return emb, self.head(h)


class TextUtteranceEncoder(Module):
    """Bi-GRU over tokens; final forward/backward states -> tanh projection -> classifier."""

    def __init__(self, input_dim, d_model, num_classes, rng, hidden_dim=None,
                 dropout=0.1, dtype=np.float32):
        self.input_dim = input_dim
        self.d_model = d_model
        self.dropout = dropout
        hidden_dim = hidden_dim or d_model
        self.bigru = BiGRU(input_dim, hidden_dim, rng, dtype)
        self.proj = Linear(2 * hidden_dim, d_model, rng, dtype)
        self.head = Linear(d_model, num_classes, rng, dtype)

    def final_states(self, tokens, mask=None):
        x, mask = _check_frames(tokens, mask, self.input_dim)
        _, h_fwd, h_bwd = self.bigru(x, mask)
        return h_fwd, h_bwd

    def embed(self, tokens, mask=None):
        h_fwd, h_bwd = self.final_states(tokens, mask)
        return tanh(self.proj(concat([h_fwd, h_bwd], axis=-1)))

    def __call__(self, tokens, mask=None, rng=None):
        emb = self.embed(tokens, mask)
        h = dropout(emb, self.dropout, rng) if (self.training and rng is not None) else emb
        return emb, self.head(h)


class ContextualGRU(Module):
    """Bi-GRU over a conversation's utterance embeddings, then self-attention,
    then a position-wise ReLU feed-forward and a linear classifier.

    The bi-GRU uses ``d_model // 2`` units per direction so its concatenated
    output is ``d_model`` wide.
    """

    def __init__(self, input_dim, d_model, num_classes, rng, d_ff=None, self_attention=True,
                 dropout=0.1, dtype=np.float32):
        if d_model % 2:
            raise ConfigError("d_model must be even for the contextual GRU")
        self.input_dim = input_dim
        self.d_model = d_model
        self.dropout = dropout
        self.use_attention = self_attention
        self.bigru = BiGRU(input_dim, d_model // 2, rng, dtype)
        self.attn = AttentionParams(d_model, rng, dtype) if self_attention else None
        self.ff = FeedForward(d_model, d_ff or 4 * d_model, d_model, rng, dtype)
        self.head = Linear(d_model, num_classes, rng, dtype)

    def __call__(self, utterances, mask=None, rng=None):
        """utterances: (B, L, D) or (L, D). Returns (context emb, logits) per position."""
        x, mask = _check_frames(utterances, mask, self.input_dim)
        drop = self.training and rng is not None
        h, _, _ = self.bigru(x, mask)
        if drop:
            h = dropout(h, self.dropout, rng)
        if self.attn is not None:
            h = self_attention_block(h, self.attn, mask)
            if drop:
                h = dropout(h, self.dropout, rng)
        emb = masked_rows(self.ff(h), mask)
        logits = self.head(emb)
        if as_tensor(utterances).ndim == 2:
            return emb[0], logits[0]
        return emb, logits


def audio_utterance_encoder(frames, params):
    return params(frames)


def text_utterance_encoder(tokens, params):
    return params(tokens)


def contextual_gru(utterances, params, mask=None):
    return params(utterances, mask)


def pad_batch(seqs, dtype=np.float32):
    """Stack variable-length (T_i, D) arrays into (B, T_max, D) plus a (B, T_max) mask."""
    if not seqs:
        raise ShapeError("empty batch")
    T = max(s.shape[0] for s in seqs)
    D = seqs[0].shape[1]
    out = np.zeros((len(seqs), T, D), dtype=dtype)
    mask = np.zeros((len(seqs), T), dtype=bool)
    for i, s in enumerate(seqs):
        out[i, : s.shape[0]] = s
        mask[i, : s.shape[0]] = True
    return out, mask


def ensure_tensor(x, dtype):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype))


def extract_embeddings(checkpoint, manifest, stage, modality, **kw):
    """Run a frozen stage over every utterance; see :func:`hcam.pipeline.extract_embeddings`."""
    from .pipeline import extract_embeddings as _extract
    return _extract(checkpoint, manifest, stage, modality, **kw)
