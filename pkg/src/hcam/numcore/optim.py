"""Adam and global-norm gradient clipping."""
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DivergenceError


def global_norm(grads):
    total = 0.0
    for g in grads:
        if g is not None:
            total += float(np.sum(np.square(g, dtype=np.float64)))
    return float(np.sqrt(total))


def clip_gradients_l2(grads, max_norm):
    """Scale every gradient by ``max_norm / norm`` when the global L2 norm exceeds it.

    Returns ``(clipped, norm_before)``; ``None`` entries pass through.
    """
    if max_norm <= 0:
        raise ConfigError("max_norm must be positive")
    norm = global_norm(grads)
    if norm <= max_norm:
        return list(grads), norm
    scale = max_norm / norm
    return [None if g is None else (g * scale).astype(g.dtype) for g in grads], norm


@dataclass
class OptimizerState:
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("betas must lie in (0, 1)")


def adam_step(params, grads, state):
    """One bias-corrected Adam update, in place.

    ``params`` maps names to Tensors and ``grads`` maps the same names to
    arrays (``None`` = parameter unused this step, left untouched). Moment
    buffers are created on a parameter's first update.
    """
    for name, g in grads.items():
        if g is not None and not np.isfinite(g).all():
            raise DivergenceError(f"non-finite gradient for parameter {name!r}")
    state.step_count += 1
    b1, b2, lr, eps = state.beta1, state.beta2, state.learning_rate, state.epsilon
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
            state.t[name] = 0
        state.t[name] += 1
        t = state.t[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.data.dtype)
    return params, state


class Adam:
    """Thin stateful wrapper used by the trainers."""

    def __init__(self, named_params, lr=1e-5, betas=(0.9, 0.999), eps=1e-8, clip_norm=None):
        self.params = dict(named_params)
        self.state = OptimizerState(lr, betas[0], betas[1], eps)
        self.clip_norm = clip_norm
        self.last_grad_norm = None

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        names = list(self.params)
        grads = [self.params[n].grad for n in names]
        for n, g in zip(names, grads):
            if g is not None and not np.isfinite(g).all():
                raise DivergenceError(f"non-finite gradient for parameter {n!r}")
        if self.clip_norm is not None:
            grads, self.last_grad_norm = clip_gradients_l2(grads, self.clip_norm)
        else:
            self.last_grad_norm = global_norm(grads)
        adam_step(self.params, dict(zip(names, grads)), self.state)
