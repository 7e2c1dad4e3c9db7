"""Cross-entropy, supervised contrastive loss and their convex combination."""
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, LabelRangeError, ShapeError
from .numcore import as_tensor, log_softmax

NORM_TOL = 1e-4
_EXCLUDED = -1e9


@dataclass
class LossConfig:
    beta: float = 0.9
    tau: float = 0.1
    class_weights: tuple = None
    self_exclude: bool = True

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ContractError(f"beta must lie in [0, 1], got {self.beta}")
        if self.tau <= 0:
            raise ContractError(f"tau must be positive, got {self.tau}")
        if self.class_weights is not None:
            self.class_weights = tuple(float(w) for w in self.class_weights)
            if any(w <= 0 for w in self.class_weights):
                raise ContractError("class weights must be positive")


def _labels(labels, num_classes):
    y = np.asarray(labels)
    if y.ndim != 1 or not np.issubdtype(y.dtype, np.integer):
        raise ShapeError("labels must be a 1-D integer array")
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise LabelRangeError(f"labels must lie in [0, {num_classes}), got range [{y.min()}, {y.max()}]")
    return y


def cross_entropy(logits, labels, class_weights=None):
    """Mean negative log-likelihood; with ``class_weights`` a weighted mean."""
    logits = as_tensor(logits)
    B, C = logits.shape
    y = _labels(labels, C)
    if y.shape[0] != B:
        raise ShapeError(f"{B} logit rows but {y.shape[0]} labels")
    picked = log_softmax(logits)[np.arange(B), y]
    if class_weights is None:
        return -picked.mean()
    w = np.asarray(class_weights, dtype=logits.dtype)
    if w.shape != (C,):
        raise ShapeError(f"class_weights must have length {C}")
    wy = w[y]
    return -(picked * wy).sum() * (1.0 / wy.sum())


def positive_weights(labels, self_exclude=True):
    """(B, B) matrix with 1/|P_j| on anchor j's positives, 0 elsewhere."""
    y = np.asarray(labels)
    pos = (y[:, None] == y[None, :]).astype(np.float64)
    if self_exclude:
        np.fill_diagonal(pos, 0.0)
    counts = pos.sum(axis=1, keepdims=True)
    return np.divide(pos, counts, out=np.zeros_like(pos), where=counts > 0)


def sup_con_loss(features, labels, tau=0.1, self_exclude=True):
    """Supervised contrastive loss, summed over anchors.

    For anchor j with positives P_j (same label), adds
    ``-1/|P_j| * sum_p log(exp(x_j.x_p/tau) / sum_a exp(x_j.x_a/tau))``.
    With ``self_exclude`` the anchor itself is dropped from both P_j and the
    denominator; otherwise both include it. Anchors without positives add 0.
    """
    x = as_tensor(features)
    if x.ndim != 2:
        raise ShapeError("features must be (B, F)")
    B = x.shape[0]
    if B < 2:
        raise ContractError("sup-con batch needs at least 2 rows")
    if tau <= 0:
        raise ContractError("tau must be positive")
    y = np.asarray(labels)
    if y.shape != (B,):
        raise ShapeError(f"{B} feature rows but labels shape {y.shape}")
    norms = np.sqrt((x.data.astype(np.float64) ** 2).sum(axis=1))
    if np.any(np.abs(norms - 1.0) > NORM_TOL):
        raise ContractError(f"sup-con features must be unit-norm (worst |norm-1| = {np.abs(norms - 1).max():.3g})")
    sim = (x @ x.T) * (1.0 / tau)
    if self_exclude:
        sim = sim + np.where(np.eye(B, dtype=bool), _EXCLUDED, 0.0).astype(x.dtype)
    logp = log_softmax(sim)
    w = positive_weights(y, self_exclude).astype(x.dtype)
    return -(logp * w).sum()


def combined_loss(logits, proj_features, labels, cfg):
    """``beta * CE + (1 - beta) * sup-con`` on one mini-batch."""
    ce = cross_entropy(logits, labels, cfg.class_weights)
    sc = sup_con_loss(proj_features, labels, cfg.tau, cfg.self_exclude)
    return ce * cfg.beta + sc * (1.0 - cfg.beta)
