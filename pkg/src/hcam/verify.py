"""Gradient-check suite: every differentiable block and full stage graphs at fp64.

Each case builds a small fp64 graph and returns a :class:`GradCheckReport`.
Used by ``hcam gradcheck`` and the test-suite.
"""
import time

import numpy as np

from .attention import AttentionParams, CoAttentionFusion, cross_attention_block, scaled_dot_attention, self_attention_block
from .losses import LossConfig, combined_loss, cross_entropy, sup_con_loss
from .numcore import (GruCellParams, Linear, Tensor, conv1d, grad_check, gru_cell, gru_sequence,
                      l2_normalize, layer_norm, log_softmax, softmax_rows)
from .sequence import AudioUtteranceEncoder, ContextualGRU, TextUtteranceEncoder

F64 = np.float64
TOLERANCE = 1e-4


def _t(rng, *shape, scale=1.0):
    return Tensor(rng.standard_normal(shape) * scale, requires_grad=True)


def _probe(out, rng):
    # fixed random projection turns any output into a scalar
    w = rng.standard_normal(out.shape)
    return lambda o: (o * w).sum()


def _check_fn(fn, params, rng):
    proj = _probe(fn(), rng)
    return grad_check(lambda: proj(fn()), params)


def _mask(B, T, rng):
    lengths = rng.integers(1, T + 1, size=B)
    lengths[0] = T
    return np.arange(T)[None, :] < lengths[:, None]


def case_softmax(rng):
    x = _t(rng, 4, 5)
    return _check_fn(lambda: softmax_rows(x), [x], rng)


def case_log_softmax(rng):
    x = _t(rng, 3, 6)
    return _check_fn(lambda: log_softmax(x), [x], rng)


def case_layer_norm(rng):
    x, g, b = _t(rng, 3, 5), _t(rng, 5), _t(rng, 5)
    return _check_fn(lambda: layer_norm(x, g, b), [x, g, b], rng)


def case_conv1d(rng):
    x, w, b = _t(rng, 2, 6, 3), _t(rng, 4, 3, 3), _t(rng, 4)
    return _check_fn(lambda: conv1d(x, w, b, 1), [x, w, b], rng)


def case_l2_normalize(rng):
    x = _t(rng, 4, 5)
    return _check_fn(lambda: l2_normalize(x), [x], rng)


def case_gru_cell(rng):
    p = GruCellParams(5, 4, rng, F64)
    x, h = _t(rng, 5), _t(rng, 4)
    params = dict(p.named_parameters(), x=x, h=h)
    return _check_fn(lambda: gru_cell(x, h, p), params, rng)


def case_gru_sequence(rng):
    p = GruCellParams(3, 4, rng, F64)
    x = _t(rng, 3, 5, 3)
    mask = _mask(3, 5, rng)
    params = dict(p.named_parameters(), x=x)
    f = lambda: gru_sequence(x, mask, p)[0] + gru_sequence(x, mask, p, reverse=True)[0]
    return _check_fn(f, params, rng)


def case_attention(rng):
    Q, K, V = _t(rng, 2, 4, 3), _t(rng, 2, 4, 3), _t(rng, 2, 4, 3)
    mask = _mask(2, 4, rng)
    return _check_fn(lambda: scaled_dot_attention(Q, K, V, mask), [Q, K, V], rng)


def case_self_attention(rng):
    p = AttentionParams(4, rng, F64)
    x = _t(rng, 2, 5, 4)
    mask = _mask(2, 5, rng)
    return _check_fn(lambda: self_attention_block(x, p, mask), dict(p.named_parameters(), x=x), rng)


def case_cross_attention(rng):
    p = AttentionParams(4, rng, F64)
    q, kv = _t(rng, 3, 4), _t(rng, 3, 4)
    return _check_fn(lambda: cross_attention_block(q, kv, p), dict(p.named_parameters(), q=q, kv=kv), rng)


def case_co_attention(rng):
    m = CoAttentionFusion(4, 3, rng, dtype=F64).eval()
    a, t = _t(rng, 3, 4), _t(rng, 3, 4)
    return _check_fn(lambda: m(a, t)[1], dict(m.named_parameters(), audio=a, text=t), rng)


def case_audio_encoder(rng):
    m = AudioUtteranceEncoder(5, 6, 3, rng, dtype=F64).eval()
    x = _t(rng, 2, 7, 5)
    mask = _mask(2, 7, rng)
    return _check_fn(lambda: m(x, mask)[1], dict(m.named_parameters(), x=x), rng)


def case_text_encoder(rng):
    m = TextUtteranceEncoder(6, 4, 3, rng, dtype=F64).eval()
    x = _t(rng, 1, 4, 6)
    return _check_fn(lambda: m(x)[1], dict(m.named_parameters(), x=x), rng)


def case_contextual_gru(rng):
    m = ContextualGRU(6, 8, 3, rng, dtype=F64).eval()
    x = _t(rng, 4, 6)
    return _check_fn(lambda: m(x)[1], dict(m.named_parameters(), x=x), rng)


def case_cross_entropy(rng):
    z = _t(rng, 5, 4, scale=2.0)
    y = rng.integers(0, 4, size=5)
    r = grad_check(lambda: cross_entropy(z, y), [z], tolerance=1e-6)
    return r


def case_weighted_cross_entropy(rng):
    z = _t(rng, 5, 3)
    y = np.array([0, 1, 2, 0, 1])
    return grad_check(lambda: cross_entropy(z, y, [1.0, 2.0, 0.5]), [z])


def case_sup_con(rng):
    x = _t(rng, 6, 4)
    y = np.array([0, 1, 0, 2, 1, 0])
    f = lambda: (sup_con_loss(l2_normalize(x), y, 0.5, True)
                 + sup_con_loss(l2_normalize(x), y, 0.5, False))
    return grad_check(f, [x])


def case_combined_loss(rng):
    z, x = _t(rng, 4, 3), _t(rng, 4, 5)
    y = np.array([0, 1, 0, 1])
    cfg = LossConfig(beta=0.6, tau=0.3)
    return grad_check(lambda: combined_loss(z, l2_normalize(x), y, cfg), [z, x])


def _stage_loss(emb, logits, y):
    from .pipeline import batch_loss
    return batch_loss(emb, logits, y, LossConfig(beta=0.7, tau=0.5))


def case_stage1_audio_graph(rng):
    m = AudioUtteranceEncoder(5, 6, 3, rng, dtype=F64).eval()
    x = Tensor(rng.standard_normal((4, 6, 5)))
    mask = _mask(4, 6, rng)
    y = np.array([0, 1, 0, 2])
    return grad_check(lambda: _stage_loss(*m(x, mask), y), dict(m.named_parameters()))


def case_stage1_text_graph(rng):
    m = TextUtteranceEncoder(5, 4, 3, rng, dtype=F64).eval()
    x = Tensor(rng.standard_normal((4, 4, 5)))
    mask = _mask(4, 4, rng)
    y = np.array([0, 1, 1, 2])
    return grad_check(lambda: _stage_loss(*m(x, mask), y), dict(m.named_parameters()))


def _conv_loss(emb, logits, labels, mask):
    idx = np.nonzero(mask)
    return _stage_loss(emb[idx], logits[idx], labels[idx])


def case_stage2_graph(rng):
    m = ContextualGRU(5, 8, 3, rng, dtype=F64).eval()
    x = Tensor(rng.standard_normal((2, 4, 5)))
    mask = np.array([[1, 1, 1, 1], [1, 1, 1, 0]], dtype=bool)
    y = rng.integers(0, 3, size=(2, 4))
    return grad_check(lambda: _conv_loss(*m(x, mask), y, mask), dict(m.named_parameters()))


def case_stage3_graph(rng):
    m = CoAttentionFusion(4, 3, rng, dtype=F64).eval()
    a, t = Tensor(rng.standard_normal((2, 4, 4))), Tensor(rng.standard_normal((2, 4, 4)))
    mask = np.array([[1, 1, 1, 1], [1, 1, 0, 0]], dtype=bool)
    y = rng.integers(0, 3, size=(2, 4))
    return grad_check(lambda: _conv_loss(*m(a, t, mask), y, mask), dict(m.named_parameters()))


def case_joint23_graph(rng):
    from .pipeline import JointContextFusion, TrainConfig
    cfg = TrainConfig(stage="joint23", modality="fused", d_model=4)
    m = JointContextFusion(3, 3, 3, cfg, rng)
    m.astype(F64).eval()
    a, t = Tensor(rng.standard_normal((2, 3, 3))), Tensor(rng.standard_normal((2, 3, 3)))
    mask = np.array([[1, 1, 1], [1, 1, 0]], dtype=bool)
    y = rng.integers(0, 3, size=(2, 3))
    return grad_check(lambda: _conv_loss(*m(a, t, mask), y, mask), dict(m.named_parameters()))


def case_head(rng):
    m = Linear(4, 3, rng, F64)
    x = _t(rng, 2, 4)
    return _check_fn(lambda: m(x), dict(m.named_parameters(), x=x), rng)


CASES = {name[5:]: fn for name, fn in sorted(globals().items()) if name.startswith("case_")}


def run_suite(seed=0, names=None):
    """Run every case (or ``names``); returns a list of result dicts."""
    results = []
    for name in names or CASES:
        rng = np.random.default_rng([seed, sum(map(ord, name))])
        t0 = time.perf_counter()
        rep = CASES[name](rng)
        results.append({"name": name, "max_rel_error": rep.max_rel_error, "tolerance": rep.tolerance,
                        "n_checked": rep.n_checked, "passed": bool(rep.passed),
                        "seconds": time.perf_counter() - t0})
    return results
