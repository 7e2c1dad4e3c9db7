"""Three-stage hierarchical training, the joint (non-hierarchical) baseline,
and embedding extraction between stages.

Stage hand-off always goes through on-disk :class:`EmbeddingStore` objects,
each stamped with the content hash of the checkpoint that produced it.
"""
import hashlib
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .attention import CoAttentionFusion
from .checkpoint import Checkpoint, file_hash, load_checkpoint, save_checkpoint
from .dataio import EmbeddingStore, batch_conversations, batch_utterances
from .errors import (CheckpointMismatchError, ConfigError, DataContractError, DivergenceError,
                     FrozenStageViolation, MissingStoreError, NumericError, OutputExistsError,
                     ShapeError)
from .inference import (StagePredictions, apply_ensemble, argmax_labels, evaluate,
                        search_ensemble_weights, weighted_f1)
from .losses import LossConfig, combined_loss, cross_entropy, sup_con_loss
from .numcore import Adam, Module, Tensor, l2_normalize, no_grad, softmax_rows
from .sequence import AudioUtteranceEncoder, ContextualGRU, TextUtteranceEncoder, pad_batch

log = logging.getLogger(__name__)

MODALITIES = ("audio", "text")
STAGES = (1, 2, 3, "joint23")


@dataclass
class TrainConfig:
    stage: object = 1
    modality: str = "audio"
    d_model: int = 64
    learning_rate: float = 1e-5
    batch_size: int = 32
    max_epochs: int = 100
    clip_norm: float = 0.25
    loss: LossConfig = field(default_factory=LossConfig)
    seed: int = 0
    patience: int = 20
    dropout: float = 0.1
    d_ff: int = None
    self_attention: bool = True
    conv_layers: int = 2
    conv_kernel: int = 3

    def __post_init__(self):
        if isinstance(self.loss, dict):
            self.loss = LossConfig(**self.loss)
        if self.stage not in STAGES:
            raise ConfigError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.modality not in ("audio", "text", "fused"):
            raise ConfigError(f"unknown modality {self.modality!r}")
        if self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.d_model < 2:
            raise ConfigError("learning_rate, batch_size and d_model must be positive")

    def to_dict(self):
        d = asdict(self)
        d["loss"] = asdict(self.loss)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown TrainConfig keys {sorted(unknown)}")
        d = dict(d)
        if isinstance(d.get("loss"), dict):
            lk = {f.name for f in fields(LossConfig)}
            bad = set(d["loss"]) - lk
            if bad:
                raise ConfigError(f"unknown loss keys {sorted(bad)}")
            d["loss"] = LossConfig(**d["loss"])
        return cls(**d)

    def replace(self, **kw):
        d = self.to_dict()
        d.update(kw)
        return TrainConfig.from_dict(d)


def subseed(seed, *names):
    """Deterministic 32-bit sub-seed for a named component."""
    h = hashlib.sha256(repr((int(seed),) + names).encode()).digest()
    return int.from_bytes(h[:4], "little")


# -- models ------------------------------------------------------------
class JointContextFusion(Module):
    """Both contextual GRUs plus the co-attention block, trained as one graph."""

    def __init__(self, audio_dim, text_dim, num_classes, cfg, rng):
        self.gru_audio = ContextualGRU(audio_dim, cfg.d_model, num_classes, rng, cfg.d_ff,
                                       cfg.self_attention, cfg.dropout)
        self.gru_text = ContextualGRU(text_dim, cfg.d_model, num_classes, rng, cfg.d_ff,
                                      cfg.self_attention, cfg.dropout)
        self.fusion = CoAttentionFusion(cfg.d_model, num_classes, rng, cfg.d_ff, cfg.dropout)

    def __call__(self, xa, xt, mask, rng=None):
        ea, _ = self.gru_audio(xa, mask, rng)
        et, _ = self.gru_text(xt, mask, rng)
        return self.fusion(ea, et, mask, rng)


def build_model(stage, modality, arch, cfg, rng):
    C = arch["num_classes"]
    if stage == 1 and modality == "audio":
        return AudioUtteranceEncoder(arch["input_dim"], cfg.d_model, C, rng, cfg.conv_layers,
                                     cfg.conv_kernel, cfg.dropout)
    if stage == 1 and modality == "text":
        return TextUtteranceEncoder(arch["input_dim"], cfg.d_model, C, rng, dropout=cfg.dropout)
    if stage == 2 and modality in MODALITIES:
        return ContextualGRU(arch["input_dim"], cfg.d_model, C, rng, cfg.d_ff,
                             cfg.self_attention, cfg.dropout)
    if stage == 3 and modality == "fused":
        if arch["audio_dim"] != arch["text_dim"]:
            raise ShapeError("fusion needs audio and text embeddings of equal width")
        return CoAttentionFusion(arch["audio_dim"], C, rng, cfg.d_ff, cfg.dropout)
    if stage == "joint23" and modality == "fused":
        return JointContextFusion(arch["audio_dim"], arch["text_dim"], C, cfg, rng)
    raise ConfigError(f"no model for stage {stage!r} / modality {modality!r}")


def model_from_checkpoint(ckpt):
    cfg = TrainConfig.from_dict(ckpt.config)
    model = build_model(ckpt.stage, ckpt.modality, ckpt.arch, cfg, np.random.default_rng(0))
    model.load_state_dict(ckpt.params)
    return model.eval()


# -- per-stage data plumbing --------------------------------------------
class _Stage1Data:
    def __init__(self, manifest, modality):
        self.m = manifest
        self.feats = manifest.features(modality)

    def batches(self, split, batch_size, seed=None, epoch=0):
        return batch_utterances(self.m, split, batch_size, seed, epoch)

    def forward(self, model, uids, rng=None):
        x, mask = pad_batch([self.feats[u] for u in uids])
        emb, logits = model(Tensor(x), mask, rng)
        return emb, logits, np.array([self.m.label(u) for u in uids])


class _ConvData:
    """Conversation batches over stores; ``stores`` is a modality -> store dict."""

    def __init__(self, manifest, stores):
        self.m = manifest
        self.stores = stores

    def batches(self, split, batch_size, seed=None, epoch=0):
        return batch_conversations(self.m, split, batch_size, seed, epoch)

    def gather(self, batch, modality):
        x, _ = pad_batch([self.stores[modality].gather(u) for u in batch.utterance_ids])
        return Tensor(x)

    @staticmethod
    def flatten(emb, logits, batch):
        idx = np.nonzero(batch.mask)
        return emb[idx], logits[idx], batch.labels[idx]


class _Stage2Data(_ConvData):
    def __init__(self, manifest, store, modality):
        super().__init__(manifest, {modality: store})
        self.modality = modality

    def forward(self, model, batch, rng=None):
        emb, logits = model(self.gather(batch, self.modality), batch.mask, rng)
        return self.flatten(emb, logits, batch)


class _FusionData(_ConvData):
    def forward(self, model, batch, rng=None):
        emb, logits = model(self.gather(batch, "audio"), self.gather(batch, "text"), batch.mask, rng)
        return self.flatten(emb, logits, batch)


def _ids_of(batch):
    return batch if isinstance(batch, list) else batch.flat_ids


def predict(model, data, split=None, batch_size=64):
    """Eval-mode pass over ``split`` (None = every utterance, manifest order).

    Returns (utterance ids, embeddings (N, d) float32, softmax probs (N, C) float32).
    """
    model.eval()
    ids, embs, probs = [], [], []
    splits = [split] if split else [s for s in ("train", "val", "test") if data.m.conversation_ids(s)]
    with no_grad():
        for s in splits:
            for batch in data.batches(s, batch_size):
                emb, logits, _ = data.forward(model, batch)
                ids.extend(_ids_of(batch))
                embs.append(emb.data)
                probs.append(softmax_rows(Tensor(logits.data.astype(np.float64))).data)
    if split is None:
        order = {u: i for i, u in enumerate(ids)}
        idx = [order[u] for u in data.m.utterance_ids()]
        ids = list(data.m.utterance_ids())
    else:
        idx = slice(None)
    return (ids, np.concatenate(embs)[idx].astype(np.float32),
            np.concatenate(probs)[idx].astype(np.float32))


def split_f1(model, data, split, num_classes):
    ids, _, probs = predict(model, data, split)
    y = np.array([data.m.label(u) for u in ids])
    return weighted_f1(argmax_labels(probs), y, num_classes)


# -- generic trainer ------------------------------------------------------
def batch_loss(emb, logits, labels, loss_cfg):
    # an all-zero embedding (e.g. every ReLU unit dead) has no direction, so it
    # sits out of the contrastive term; it still gets the cross-entropy signal
    live = np.nonzero((emb.data * emb.data).sum(axis=-1) > 1e-20)[0]
    if len(live) == len(labels) and len(labels) >= 2:
        return combined_loss(logits, l2_normalize(emb), labels, loss_cfg)
    ce = cross_entropy(logits, labels, loss_cfg.class_weights) * loss_cfg.beta
    if len(live) < 2:
        # fewer than two rows have no positive pairs: the contrastive term is exactly 0
        return ce
    return ce + sup_con_loss(l2_normalize(emb[live]), labels[live], loss_cfg.tau,
                             loss_cfg.self_exclude) * (1.0 - loss_cfg.beta)


def fit(model, data, cfg, num_classes, tag):
    """Adam + global-norm clipping; keeps the epoch with best validation weighted F1."""
    opt = Adam(model.named_parameters(), lr=cfg.learning_rate, clip_norm=cfg.clip_norm)
    drop_rng = np.random.default_rng(subseed(cfg.seed, tag, "dropout"))
    shuffle_seed = subseed(cfg.seed, tag, "shuffle")
    best_f1, best_epoch, best_state = -1.0, -1, None
    history = []
    for epoch in range(cfg.max_epochs):
        model.train()
        total, steps = 0.0, 0
        for step, batch in enumerate(data.batches("train", cfg.batch_size, shuffle_seed, epoch)):
            try:
                emb, logits, y = data.forward(model, batch, drop_rng)
                loss = batch_loss(emb, logits, y, cfg.loss)
                opt.zero_grad()
                loss.backward()
                opt.step()
            except NumericError as e:
                raise DivergenceError(f"{tag}: divergence at epoch {epoch} step {step}: {e}") from None
            total += float(loss.data)
            steps += 1
        val = split_f1(model, data, "val", num_classes)
        history.append({"epoch": epoch, "train_loss": total / max(steps, 1), "val_f1": val})
        log.info("%s epoch %d loss %.4f val_f1 %.4f", tag, epoch, total / max(steps, 1), val)
        if val > best_f1:
            best_f1, best_epoch, best_state = val, epoch, model.state_dict()
        elif epoch - best_epoch >= cfg.patience:
            break
    model.load_state_dict(best_state)
    model.eval()
    return {"best_epoch": best_epoch, "best_val_f1": best_f1, "epochs_run": len(history),
            "history": history}


def _make_checkpoint(model, stage, modality, cfg, arch, info):
    return Checkpoint(stage, modality, model.state_dict(), cfg.to_dict(), arch, info)


# -- stage trainers -------------------------------------------------------
def train_stage1(cfg, manifest, modality=None):
    """Train one context-free utterance encoder; returns its Checkpoint."""
    modality = modality or cfg.modality
    if modality not in MODALITIES:
        raise ConfigError(f"stage 1 trains audio or text, not {modality!r}")
    cfg = cfg.replace(stage=1, modality=modality)
    arch = {"input_dim": manifest.feature_dim(modality), "num_classes": manifest.num_classes,
            "d_model": cfg.d_model}
    model = build_model(1, modality, arch, cfg, np.random.default_rng(subseed(cfg.seed, "stage1", modality, "init")))
    info = fit(model, _Stage1Data(manifest, modality), cfg, manifest.num_classes, f"stage1-{modality}")
    return _make_checkpoint(model, 1, modality, cfg, arch, info)


def _verify_store(store, ckpt_path, stage, modality):
    ckpt = load_checkpoint(ckpt_path, stage=stage, modality=modality)
    if store.meta.get("checkpoint_hash") != ckpt.content_hash:
        raise FrozenStageViolation(
            f"store for stage {stage} {modality} was not produced by {ckpt_path} (hash drift)")
    return ckpt


class FrozenGuard:
    """Hashes upstream checkpoint files before training and re-checks afterwards.

    ``paths`` maps a label (e.g. ``stage1_audio``) to a checkpoint file; the
    record returned by :meth:`verify` is keyed by label so it does not depend
    on where the workspace lives.
    """

    def __init__(self, paths):
        self.paths = dict(paths)
        self.before = {k: file_hash(p) for k, p in self.paths.items()}

    def verify(self):
        for k, p in self.paths.items():
            if file_hash(p) != self.before[k]:
                raise FrozenStageViolation(f"upstream checkpoint {p} changed during training")
        return dict(self.before)


def train_stage2(cfg, stage1_checkpoint, stage1_store, manifest, modality=None):
    """Contextual GRU over frozen stage-1 embeddings of one modality."""
    modality = modality or cfg.modality
    guard = FrozenGuard({f"stage1_{modality}": stage1_checkpoint})
    _verify_store(stage1_store, stage1_checkpoint, 1, modality)
    cfg = cfg.replace(stage=2, modality=modality)
    arch = {"input_dim": stage1_store.embeddings.shape[1], "num_classes": manifest.num_classes,
            "d_model": cfg.d_model}
    model = build_model(2, modality, arch, cfg, np.random.default_rng(subseed(cfg.seed, "stage2", modality, "init")))
    info = fit(model, _Stage2Data(manifest, stage1_store, modality), cfg, manifest.num_classes, f"stage2-{modality}")
    info["upstream"] = guard.verify()
    return _make_checkpoint(model, 2, modality, cfg, arch, info)


def _fusion_arch(stores, manifest, cfg):
    for m in MODALITIES:
        missing = [u for u in manifest.utterance_ids() if u not in stores[m]]
        if missing:
            raise DataContractError(f"{m} store lacks {len(missing)} utterances (first: {missing[0]!r})")
    return {"audio_dim": stores["audio"].embeddings.shape[1], "text_dim": stores["text"].embeddings.shape[1],
            "num_classes": manifest.num_classes, "d_model": cfg.d_model}


def train_stage3(cfg, stage2_checkpoints, stage2_stores, manifest):
    """Co-attention fusion over frozen stage-2 context embeddings.

    ``stage2_checkpoints`` / ``stage2_stores`` map modality -> path / store.
    """
    guard = FrozenGuard({f"stage2_{m}": stage2_checkpoints[m] for m in MODALITIES})
    for m in MODALITIES:
        _verify_store(stage2_stores[m], stage2_checkpoints[m], 2, m)
    arch = _fusion_arch(stage2_stores, manifest, cfg)
    cfg = cfg.replace(stage=3, modality="fused", d_model=arch["audio_dim"])
    model = build_model(3, "fused", arch, cfg, np.random.default_rng(subseed(cfg.seed, "stage3", "init")))
    info = fit(model, _FusionData(manifest, stage2_stores), cfg, manifest.num_classes, "stage3")
    info["upstream"] = guard.verify()
    return _make_checkpoint(model, 3, "fused", cfg, arch, info)


def train_nonhierarchical(cfg, stage1_checkpoints, stage1_stores, manifest):
    """Stages II and III as one optimization from frozen stage-1 embeddings."""
    guard = FrozenGuard({f"stage1_{m}": stage1_checkpoints[m] for m in MODALITIES})
    for m in MODALITIES:
        _verify_store(stage1_stores[m], stage1_checkpoints[m], 1, m)
    arch = _fusion_arch(stage1_stores, manifest, cfg)
    cfg = cfg.replace(stage="joint23", modality="fused")
    model = build_model("joint23", "fused", arch, cfg, np.random.default_rng(subseed(cfg.seed, "joint23", "init")))
    info = fit(model, _FusionData(manifest, stage1_stores), cfg, manifest.num_classes, "joint23")
    info["upstream"] = guard.verify()
    return _make_checkpoint(model, "joint23", "fused", cfg, arch, info)



# -- extraction -----------------------------------------------------------
def extract_embeddings(checkpoint, manifest, stage, modality, inputs=None, batch_size=64):
    """Run a frozen model over every utterance of ``manifest``.

    ``inputs``: None for stage 1, a stage-1 store for stage 2, and a
    modality -> store dict for stage 3 / joint23.
    """
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
    if ckpt.stage != stage or ckpt.modality != modality:
        raise CheckpointMismatchError(
            f"checkpoint is stage {ckpt.stage!r}/{ckpt.modality}, requested {stage!r}/{modality}")
    model = model_from_checkpoint(ckpt)
    if stage == 1:
        data = _Stage1Data(manifest, modality)
    elif stage == 2:
        if inputs is None:
            raise DataContractError("stage-2 extraction needs the stage-1 store")
        data = _Stage2Data(manifest, inputs, modality)
    else:
        if not isinstance(inputs, dict):
            raise DataContractError("fusion extraction needs audio and text stores")
        _fusion_arch(inputs, manifest, TrainConfig.from_dict(ckpt.config))
        data = _FusionData(manifest, inputs)
    ids, emb, probs = predict(model, data, None, batch_size)
    meta = {"stage": stage, "modality": modality, "checkpoint_hash": ckpt.content_hash,
            "name": f"stage{stage}-{modality}"}
    return EmbeddingStore(ids, emb, probs, meta)


# -- on-disk workspace ------------------------------------------------------
class Workspace:
    """Directory layout for one seed of a hierarchical run::

        <root>/stage1_audio/checkpoint.hcck   <root>/stage1_audio/store/
        <root>/stage1_text/...  stage2_audio/  stage2_text/  stage3_fused/  joint23_fused/
    """

    def __init__(self, root):
        self.root = Path(root)

    def stage_dir(self, stage, modality):
        return self.root / f"stage{stage}_{modality}" if stage != "joint23" else self.root / "joint23_fused"

    def checkpoint_path(self, stage, modality):
        return self.stage_dir(stage, modality) / "checkpoint.hcck"

    def store_dir(self, stage, modality):
        return self.stage_dir(stage, modality) / "store"

    def load_store(self, stage, modality):
        return EmbeddingStore.load(self.store_dir(stage, modality))

    def has_store(self, stage, modality):
        return (self.store_dir(stage, modality) / "index.tsv").is_file()


def _save_new(ckpt, path):
    if Path(path).exists():
        raise OutputExistsError(f"{path} exists; refusing to overwrite")
    save_checkpoint(ckpt, path)
    return path


def _stage_inputs(ws, stage):
    """Upstream (checkpoint paths, stores) a stage consumes; MissingStoreError if absent."""
    prev = {2: 1, 3: 2, "joint23": 1}[stage]
    ckpts, stores = {}, {}
    for m in MODALITIES:
        if not ws.has_store(prev, m):
            raise MissingStoreError(
                f"stage {stage} needs the stage-{prev} {m} store at {ws.store_dir(prev, m)}; run extract first")
        ckpts[m] = ws.checkpoint_path(prev, m)
        stores[m] = ws.load_store(prev, m)
    return ckpts, stores


def run_train(ws, cfg, manifest, stage, modality=None):
    """Train one stage into the workspace; returns the checkpoint path."""
    if stage == 1:
        ckpt = train_stage1(cfg, manifest, modality)
    elif stage == 2:
        if not ws.has_store(1, modality):
            raise MissingStoreError(f"stage 2 needs the stage-1 {modality} store at "
                                    f"{ws.store_dir(1, modality)}; run extract first")
        ckpt = train_stage2(cfg, ws.checkpoint_path(1, modality), ws.load_store(1, modality), manifest, modality)
    elif stage == 3:
        ckpts, stores = _stage_inputs(ws, 3)
        ckpt = train_stage3(cfg, ckpts, stores, manifest)
    elif stage == "joint23":
        ckpts, stores = _stage_inputs(ws, "joint23")
        ckpt = train_nonhierarchical(cfg, ckpts, stores, manifest)
    else:
        raise ConfigError(f"unknown stage {stage!r}")
    return _save_new(ckpt, ws.checkpoint_path(ckpt.stage, ckpt.modality))


def run_extract(ws, manifest, stage, modality):
    """Extract and persist the store of a trained stage; returns the store."""
    path = ws.checkpoint_path(stage, modality)
    if not path.is_file():
        raise MissingStoreError(f"no stage {stage} {modality} checkpoint at {path}")
    out = ws.store_dir(stage, modality)
    if out.exists():
        raise OutputExistsError(f"{out} exists; refusing to overwrite")
    if stage == 1:
        inputs = None
    elif stage == 2:
        if not ws.has_store(1, modality):
            raise MissingStoreError(f"no stage-1 {modality} store at {ws.store_dir(1, modality)}")
        inputs = ws.load_store(1, modality)
    else:
        inputs = _stage_inputs(ws, stage)[1]
    store = extract_embeddings(path, manifest, stage, modality, inputs)
    store.save(out)
    return store


def collect_predictions(ws, manifest, include_joint=False):
    """Per-stage softmax outputs from the workspace stores, aligned to manifest order."""
    ids = manifest.utterance_ids()
    probs = {}
    for key, (stage, modality) in {"a1": (1, "audio"), "t1": (1, "text"), "a2": (2, "audio"),
                                   "t2": (2, "text"), "c": (3, "fused")}.items():
        if ws.has_store(stage, modality):
            probs[key] = ws.load_store(stage, modality).gather_probs(ids)
    if include_joint and ws.has_store("joint23", "fused"):
        return StagePredictions(ids, probs), ws.load_store("joint23", "fused").gather_probs(ids)
    return StagePredictions(ids, probs)


def run_hierarchy(ws, configs, manifest, nonhierarchical=False):
    """Full curriculum: train + extract stages I, II, III (and optionally joint23).

    ``configs`` maps stage (1, 2, 3, "joint23") to a TrainConfig.
    """
    for m in MODALITIES:
        run_train(ws, configs[1], manifest, 1, m)
        run_extract(ws, manifest, 1, m)
    for m in MODALITIES:
        run_train(ws, configs[2], manifest, 2, m)
        run_extract(ws, manifest, 2, m)
    run_train(ws, configs[3], manifest, 3)
    run_extract(ws, manifest, 3, "fused")
    if nonhierarchical:
        run_train(ws, configs["joint23"], manifest, "joint23")
        run_extract(ws, manifest, "joint23", "fused")
    return ws


def evaluate_workspace(ws, manifest, ensembling=True, split="test", grid_step=0.1):
    """Per-stage F1 on val and ``split``; with ensembling, weights are searched on val."""
    preds = collect_predictions(ws, manifest)
    C = manifest.num_classes
    out = {"stages": {}, "split": split}
    for s in ("val", split):
        ids = manifest.utterance_ids(s)
        y = np.array([manifest.label(u) for u in ids])
        sub = preds.subset(ids)
        out["stages"][s] = {k: weighted_f1(argmax_labels(p), y, C) for k, p in sub.probs.items()}
    if ws.has_store("joint23", "fused"):
        for s in ("val", split):
            ids = manifest.utterance_ids(s)
            y = np.array([manifest.label(u) for u in ids])
            p = ws.load_store("joint23", "fused").gather_probs(ids)
            out["stages"][s]["joint23"] = weighted_f1(argmax_labels(p), y, C)
    if ensembling:
        vids = manifest.utterance_ids("val")
        w = search_ensemble_weights(preds.subset(vids), [manifest.label(u) for u in vids], grid_step)
        tids = manifest.utterance_ids(split)
        final = apply_ensemble(preds.subset(tids), w)
        y = np.array([manifest.label(u) for u in tids])
        out["weights"] = asdict(w)
        out["ensemble_val_f1"] = w.val_f1["ensemble"]
        out["ensemble_f1"] = weighted_f1(argmax_labels(final), y, C)
        out["report"] = evaluate(argmax_labels(final), y, C).to_dict()
    elif "c" in preds.probs:
        tids = manifest.utterance_ids(split)
        y = np.array([manifest.label(u) for u in tids])
        out["report"] = evaluate(argmax_labels(preds.subset(tids).probs["c"]), y, C).to_dict()
    return out


def store_f1(store, manifest, split):
    ids = manifest.utterance_ids(split)
    y = np.array([manifest.label(u) for u in ids])
    return weighted_f1(argmax_labels(store.gather_probs(ids)), y, manifest.num_classes)


def mean_std(values):
    v = np.asarray(values, dtype=np.float64)
    return {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if len(v) > 1 else 0.0,
            "values": [float(x) for x in v]}
