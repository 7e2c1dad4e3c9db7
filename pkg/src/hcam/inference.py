"""Staged prediction ensembling, validation weight search and metrics.

Stage keys used throughout: ``a1``/``t1`` (stage I audio/text), ``a2``/``t2``
(stage II), ``c`` (stage III fused).
"""
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, DataContractError, EmptySplitError, ShapeError

STAGE_KEYS = ("a1", "t1", "a2", "t2", "c")
DIST_TOL = 1e-6
PRED_TAG = "#hcam-predictions"


def _check_dist(p, what="probabilities"):
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > DIST_TOL):
        raise ContractError(f"{what} are not valid probability distributions")
    return p


# -- metrics -----------------------------------------------------------
def _pair(pred, true):
    pred, true = np.asarray(pred, dtype=np.int64), np.asarray(true, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ShapeError(f"prediction/label length mismatch: {pred.shape} vs {true.shape}")
    return pred, true


def confusion_matrix(pred, true, num_classes):
    """Entry (i, j) counts utterances with true class i predicted as j."""
    pred, true = _pair(pred, true)
    if pred.size and (min(pred.min(), true.min()) < 0 or max(pred.max(), true.max()) >= num_classes):
        raise ShapeError(f"labels outside [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (true, pred), 1)
    return cm


def per_class_prf(cm):
    tp = np.diag(cm).astype(np.float64)
    pred_tot = cm.sum(axis=0)
    true_tot = cm.sum(axis=1)
    prec = np.divide(tp, pred_tot, out=np.zeros_like(tp), where=pred_tot > 0)
    rec = np.divide(tp, true_tot, out=np.zeros_like(tp), where=true_tot > 0)
    denom = prec + rec
    f1 = np.divide(2 * prec * rec, denom, out=np.zeros_like(tp), where=denom > 0)
    return prec, rec, f1, true_tot


def weighted_f1(pred, true, num_classes=None):
    """Support-weighted mean of per-class F1."""
    pred, true = _pair(pred, true)
    if true.size == 0:
        raise EmptySplitError("weighted F1 of an empty label set")
    C = num_classes or int(max(pred.max(), true.max())) + 1
    _, _, f1, support = per_class_prf(confusion_matrix(pred, true, C))
    return float((f1 * support).sum() / support.sum())


def argmax_labels(probs):
    # np.argmax returns the first maximal index: ties go to the lowest class
    return np.asarray(probs).argmax(axis=-1)


@dataclass
class EvalReport:
    weighted_f1: float
    precision: list
    recall: list
    f1: list
    support: list
    confusion: list
    accuracy: float = 0.0

    def to_dict(self):
        return asdict(self)

    def summary(self):
        lines = [f"weighted F1 {self.weighted_f1:.4f}  accuracy {self.accuracy:.4f}",
                 "class  prec    rec     f1      support"]
        for c, (p, r, f, s) in enumerate(zip(self.precision, self.recall, self.f1, self.support)):
            lines.append(f"{c:<6} {p:.4f}  {r:.4f}  {f:.4f}  {s}")
        lines.append("confusion (rows = true):")
        lines.extend("  " + " ".join(f"{v:5d}" for v in row) for row in self.confusion)
        return "\n".join(lines)


def evaluate(pred, true, num_classes):
    pred, true = _pair(pred, true)
    cm = confusion_matrix(pred, true, num_classes)
    prec, rec, f1, support = per_class_prf(cm)
    wf1 = float((f1 * support).sum() / support.sum()) if support.sum() else 0.0
    acc = float(np.trace(cm) / cm.sum()) if cm.sum() else 0.0
    return EvalReport(wf1, prec.tolist(), rec.tolist(), f1.tolist(), support.tolist(), cm.tolist(), acc)


# -- ensembling --------------------------------------------------------
@dataclass
class EnsembleWeights:
    alpha_a_12: float = 1.0
    alpha_t_12: float = 1.0
    alpha_c: float = 1.0
    alpha_a_23: float = 0.0
    alpha_t_23: float = 0.0
    val_f1: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("alpha_a_12", "alpha_t_12"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1]")
        triple = (self.alpha_c, self.alpha_a_23, self.alpha_t_23)
        if min(triple) < 0 or abs(sum(triple) - 1.0) > 1e-9:
            raise ContractError(f"stage-3 weights must lie on the simplex, got {triple}")

    @classmethod
    def canonical(cls, alpha_a_12, alpha_t_12, alpha_c, alpha_a_23, alpha_t_23):
        """Project raw non-negative stage-3 weights onto the simplex (argmax-preserving)."""
        s = alpha_c + alpha_a_23 + alpha_t_23
        if min(alpha_c, alpha_a_23, alpha_t_23) < 0 or s <= 0:
            raise ContractError("stage-3 weights must be non-negative with a positive sum")
        return cls(alpha_a_12, alpha_t_12, alpha_c / s, alpha_a_23 / s, alpha_t_23 / s)


def ensemble_stage2(p2, p1, alpha):
    """``alpha * p2 + (1 - alpha) * p1``."""
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"alpha must lie in [0, 1], got {alpha}")
    p2 = _check_dist(p2, "stage-2 probabilities")
    p1 = _check_dist(p1, "stage-1 probabilities")
    if p1.shape != p2.shape:
        raise ShapeError(f"stage outputs disagree in shape: {p2.shape} vs {p1.shape}")
    return alpha * p2 + (1.0 - alpha) * p1


def ensemble_stage3(p_c, y_a2, y_t2, weights):
    """``alpha_c p_c + alpha_a y_a2 + alpha_t y_t2`` with simplex weights.

    ``weights`` is an :class:`EnsembleWeights` or a raw (alpha_c, alpha_a, alpha_t) triple.
    """
    if isinstance(weights, EnsembleWeights):
        wc, wa, wt = weights.alpha_c, weights.alpha_a_23, weights.alpha_t_23
    else:
        wc, wa, wt = weights
    if min(wc, wa, wt) < 0 or abs(wc + wa + wt - 1.0) > 1e-9:
        raise ContractError(f"stage-3 weights {(wc, wa, wt)} are not on the simplex")
    p_c = _check_dist(p_c, "fused probabilities")
    y_a2 = _check_dist(y_a2, "audio stage-2 probabilities")
    y_t2 = _check_dist(y_t2, "text stage-2 probabilities")
    if not p_c.shape == y_a2.shape == y_t2.shape:
        raise ShapeError("stage outputs disagree in shape")
    return wc * p_c + wa * y_a2 + wt * y_t2


def alpha_grid(step):
    n = int(round(1.0 / step))
    if n < 1 or abs(n * step - 1.0) > 1e-9:
        raise ConfigError(f"grid step {step} must divide 1")
    return [i / n for i in range(n + 1)]


def simplex_grid(step):
    n = int(round(1.0 / step))
    alpha_grid(step)
    return [(i / n, j / n, (n - i - j) / n) for i in range(n + 1) for j in range(n + 1 - i)]


def _f1_of(probs, labels, C):
    return weighted_f1(argmax_labels(probs), labels, C)


def alpha_curve(p2, p1, labels, grid_step=0.1, num_classes=None):
    """Weighted F1 of ``ensemble_stage2`` at every grid alpha: [(alpha, f1), ...]."""
    C = num_classes or np.asarray(p2).shape[-1]
    return [(a, _f1_of(ensemble_stage2(p2, p1, a), labels, C)) for a in alpha_grid(grid_step)]


def _best(candidates):
    # candidates: (f1, preference_key, value); highest f1, then highest preference
    return max(candidates, key=lambda c: (c[0], c[1]))[2]


@dataclass
class StagePredictions:
    ids: list
    probs: dict   # stage key -> (N, C) array aligned with ids

    def __post_init__(self):
        for k, p in self.probs.items():
            if k not in STAGE_KEYS:
                raise DataContractError(f"unknown stage key {k!r}")
            p = np.asarray(p, dtype=np.float64)
            if p.shape[0] != len(self.ids):
                raise ShapeError(f"stage {k}: {p.shape[0]} rows for {len(self.ids)} ids")
            self.probs[k] = _check_dist(p, f"stage {k} probabilities")

    def require(self, *keys):
        missing = [k for k in keys if k not in self.probs]
        if missing:
            raise DataContractError(f"predictions missing stages {missing}")

    def subset(self, ids):
        row = {u: i for i, u in enumerate(self.ids)}
        idx = [row[u] for u in ids]
        return StagePredictions(list(ids), {k: p[idx] for k, p in self.probs.items()})


def search_ensemble_weights(val_predictions, val_labels, grid_step=0.1):
    """Grid-search the stage-2 alpha per modality, then the stage-3 simplex.

    Ties prefer the newest stage: larger stage-2 alpha, then larger alpha_c,
    then larger audio weight.
    """
    val_predictions.require(*STAGE_KEYS)
    y = np.asarray(val_labels, dtype=np.int64)
    if y.size == 0:
        raise EmptySplitError("validation split is empty")
    P = val_predictions.probs
    C = P["c"].shape[-1]
    grid = alpha_grid(grid_step)
    aa = _best([(_f1_of(ensemble_stage2(P["a2"], P["a1"], a), y, C), a, a) for a in grid])
    at = _best([(_f1_of(ensemble_stage2(P["t2"], P["t1"], a), y, C), a, a) for a in grid])
    ya = ensemble_stage2(P["a2"], P["a1"], aa)
    yt = ensemble_stage2(P["t2"], P["t1"], at)
    tri = _best([(_f1_of(ensemble_stage3(P["c"], ya, yt, w), y, C), w, w) for w in simplex_grid(grid_step)])
    final = ensemble_stage3(P["c"], ya, yt, tri)
    val_f1 = {k: _f1_of(P[k], y, C) for k in STAGE_KEYS}
    val_f1.update(a12=_f1_of(ya, y, C), t12=_f1_of(yt, y, C), ensemble=_f1_of(final, y, C))
    return EnsembleWeights(aa, at, *tri, val_f1=val_f1)


def apply_ensemble(preds, weights):
    """Final ensembled probabilities for every utterance in ``preds``."""
    P = preds.probs
    ya = ensemble_stage2(P["a2"], P["a1"], weights.alpha_a_12)
    yt = ensemble_stage2(P["t2"], P["t1"], weights.alpha_t_12)
    return ensemble_stage3(P["c"], ya, yt, weights)


# -- prediction store file -------------------------------------------
def write_predictions(path, preds):
    """One line per (utterance, stage): ``utterance_id<TAB>stage<TAB>p0,p1,...``."""
    C = next(iter(preds.probs.values())).shape[-1]
    lines = [f"{PRED_TAG}\tversion=1\tnum_classes={C}", "utterance_id\tstage\tprobs"]
    for i, uid in enumerate(preds.ids):
        for k in STAGE_KEYS:
            if k in preds.probs:
                lines.append(f"{uid}\t{k}\t" + ",".join(repr(float(v)) for v in preds.probs[k][i]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_predictions(path):
    lines = Path(path).read_text().splitlines()
    if len(lines) < 2 or not lines[0].startswith(PRED_TAG + "\t"):
        raise DataContractError(f"{path}: not a prediction store")
    ids, rows = [], {}
    for lineno, line in enumerate(lines[2:], start=3):
        parts = line.split("\t")
        if len(parts) != 3 or parts[1] not in STAGE_KEYS:
            raise DataContractError(f"{path}:{lineno}: malformed prediction line")
        uid, k, vals = parts
        if uid not in rows:
            ids.append(uid)
            rows[uid] = {}
        rows[uid][k] = [float(v) for v in vals.split(",")]
    keys = set(rows[ids[0]]) if ids else set()
    if any(set(r) != keys for r in rows.values()):
        raise DataContractError(f"{path}: utterances carry different stage sets")
    probs = {k: np.array([rows[u][k] for u in ids]) for k in STAGE_KEYS if k in keys}
    return StagePredictions(ids, probs)
