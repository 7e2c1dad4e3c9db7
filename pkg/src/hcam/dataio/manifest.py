"""Conversation manifests.

A manifest is a tab-separated text file::

    #hcam-manifest	version=1	num_classes=<C>
    conversation_id	utterance_id	order_index	split	label	audio_path	text_path
    <one record per line, fields in the order above>

Paths are relative to the manifest's directory. Blank lines are ignored.
Loading validates everything eagerly and caches the embedding arrays.
"""
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import (DuplicateOrderError, EmbeddingFileError, LabelRangeError,
                      ManifestFormatError, MissingEmbeddingError, OrderingGapError)
from .embfile import read_embedding_file

FIELDS = ("conversation_id", "utterance_id", "order_index", "split", "label",
          "audio_path", "text_path")
SPLITS = ("train", "val", "test")
HEADER_TAG = "#hcam-manifest"


@dataclass(frozen=True)
class Utterance:
    conversation_id: str
    utterance_id: str
    order_index: int
    split: str
    label: int
    audio_path: str
    text_path: str


@dataclass
class Manifest:
    num_classes: int
    root: Path
    utterances: dict = field(default_factory=dict)      # utterance_id -> Utterance
    conversations: dict = field(default_factory=dict)   # conversation_id -> [utterance_id] in order
    audio: dict = field(default_factory=dict)           # utterance_id -> (T, D_audio) array
    text: dict = field(default_factory=dict)

    def split_of(self, conversation_id):
        return self.utterances[self.conversations[conversation_id][0]].split

    def conversation_ids(self, split=None):
        return [c for c in self.conversations if split is None or self.split_of(c) == split]

    def utterance_ids(self, split=None):
        return [u for c in self.conversation_ids(split) for u in self.conversations[c]]

    def label(self, utterance_id):
        return self.utterances[utterance_id].label

    def features(self, modality):
        return {"audio": self.audio, "text": self.text}[modality]

    def feature_dim(self, modality):
        return next(iter(self.features(modality).values())).shape[1]


def write_manifest(path, records, num_classes):
    path = Path(path)
    lines = [f"{HEADER_TAG}\tversion=1\tnum_classes={num_classes}", "\t".join(FIELDS)]
    for r in records:
        lines.append("\t".join(str(getattr(r, f)) for f in FIELDS))
    path.write_text("\n".join(lines) + "\n")


def _parse_header(line, path):
    parts = line.rstrip("\n").split("\t")
    if not parts or parts[0] != HEADER_TAG:
        raise ManifestFormatError(f"{path}: missing '{HEADER_TAG}' header line")
    kv = {}
    for p in parts[1:]:
        if "=" not in p:
            raise ManifestFormatError(f"{path}: malformed header field {p!r}")
        k, v = p.split("=", 1)
        kv[k] = v
    if kv.get("version") != "1":
        raise ManifestFormatError(f"{path}: unsupported manifest version {kv.get('version')!r}")
    try:
        c = int(kv["num_classes"])
    except (KeyError, ValueError):
        raise ManifestFormatError(f"{path}: header needs an integer num_classes") from None
    if c < 2:
        raise ManifestFormatError(f"{path}: num_classes must be >= 2")
    return c


def load_manifest(path, load_embeddings=True):
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise ManifestFormatError(f"cannot read manifest {path}: {e}") from None
    if len(lines) < 2:
        raise ManifestFormatError(f"{path}: manifest needs a header and a column line")
    num_classes = _parse_header(lines[0], path)
    if tuple(lines[1].split("\t")) != FIELDS:
        raise ManifestFormatError(f"{path}: column line must be {'<TAB>'.join(FIELDS)}")
    m = Manifest(num_classes=num_classes, root=path.parent)
    orders = {}
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != len(FIELDS):
            raise ManifestFormatError(f"{path}:{lineno}: expected {len(FIELDS)} fields, got {len(parts)}")
        conv, uid, order, split, label, apath, tpath = parts
        try:
            order, label = int(order), int(label)
        except ValueError:
            raise ManifestFormatError(f"{path}:{lineno}: order_index and label must be integers") from None
        if split not in SPLITS:
            raise ManifestFormatError(f"{path}:{lineno}: split {split!r} not in {SPLITS}")
        if not 0 <= label < num_classes:
            raise LabelRangeError(f"{path}:{lineno}: label {label} outside [0, {num_classes})")
        if uid in m.utterances:
            raise ManifestFormatError(f"{path}:{lineno}: duplicate utterance id {uid!r}")
        seen = orders.setdefault(conv, {})
        if order in seen:
            raise DuplicateOrderError(
                f"{path}:{lineno}: conversation {conv!r} repeats order_index {order}")
        seen[order] = uid
        m.utterances[uid] = Utterance(conv, uid, order, split, label, apath, tpath)

    for conv, seen in orders.items():
        idx = sorted(seen)
        if idx != list(range(len(idx))):
            missing = sorted(set(range(idx[-1] + 1)) - set(idx))
            raise OrderingGapError(
                f"{path}: conversation {conv!r} order_index must be 0..{len(idx) - 1}; missing {missing}")
        m.conversations[conv] = [seen[i] for i in idx]
        splits = {m.utterances[u].split for u in m.conversations[conv]}
        if len(splits) > 1:
            raise ManifestFormatError(f"{path}: conversation {conv!r} spans splits {sorted(splits)}")

    if load_embeddings:
        for store, attr in ((m.audio, "audio_path"), (m.text, "text_path")):
            dims = set()
            for uid, utt in m.utterances.items():
                fp = m.root / getattr(utt, attr)
                if not fp.is_file():
                    raise MissingEmbeddingError(f"{path}: utterance {uid!r} references missing file {fp}")
                arr = read_embedding_file(fp)
                dims.add(arr.shape[1])
                store[uid] = arr
            if len(dims) > 1:
                raise EmbeddingFileError(f"{path}: inconsistent {attr} widths {sorted(dims)}")
    return m
