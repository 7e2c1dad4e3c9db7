"""Central finite-difference gradient checking."""
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    per_param: dict = field(default_factory=dict)
    n_checked: int = 0

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance


def rel_error(a, b, floor=1e-6):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def grad_check(f, params, eps=1e-5, tolerance=1e-4, floor=1e-6, max_elements=None, rng=None):
    """Compare reverse-mode gradients of scalar ``f()`` against central differences.

    ``params`` is a list or dict of Tensors (promoted to float64 in place).
    Element-wise relative error uses ``max(|a|, |n|, floor)`` as denominator so
    that exact-zero gradients do not blow up. ``max_elements`` optionally
    subsamples large parameters. Failures are reported, never raised.
    """
    named = dict(params) if isinstance(params, dict) else {f"p{i}": p for i, p in enumerate(params)}
    for p in named.values():
        p.data = p.data.astype(np.float64)
        p.grad = None
    out = f()
    out.backward()
    analytic = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for k, p in named.items()}
    report = GradCheckReport(0.0, tolerance)
    for k, p in named.items():
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            rng = rng or np.random.default_rng(0)
            idx = np.sort(rng.choice(flat.size, max_elements, replace=False))
        numeric = np.empty(len(idx))
        for n, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + eps
            fp = _scalar(f())
            flat[i] = orig - eps
            fm = _scalar(f())
            flat[i] = orig
            numeric[n] = (fp - fm) / (2 * eps)
        err = rel_error(analytic[k].reshape(-1)[idx], numeric, floor)
        worst = float(err.max()) if err.size else 0.0
        report.per_param[k] = worst
        report.max_rel_error = max(report.max_rel_error, worst)
        report.n_checked += len(idx)
    for p in named.values():
        p.grad = None
    return report


def _scalar(t):
    return float(t.data) if isinstance(t, Tensor) else float(t)
