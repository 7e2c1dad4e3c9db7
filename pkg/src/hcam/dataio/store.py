"""On-disk embedding stores: the hand-off between training stages.

A store is a directory::

    index.tsv        "#hcam-store\tversion=1" then one utterance id per line
    embeddings.emb   (N, d) pre-classifier embeddings, embedding-file format
    probs.emb        (N, C) softmax outputs, same format
    meta.json        stage, modality, source checkpoint hash, ...

Row i of both payloads belongs to the i-th id in ``index.tsv``.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractError, MissingStoreError, StoreKeyError
from .embfile import read_embedding_file, write_embedding_file

STORE_TAG = "#hcam-store\tversion=1"


@dataclass
class EmbeddingStore:
    ids: list
    embeddings: np.ndarray
    probs: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._row = {u: i for i, u in enumerate(self.ids)}
        if len(self._row) != len(self.ids):
            raise ContractError("duplicate utterance ids in store")

    def __len__(self):
        return len(self.ids)

    def __contains__(self, uid):
        return uid in self._row

    def _rows(self, uids):
        try:
            return [self._row[u] for u in uids]
        except KeyError as e:
            raise StoreKeyError(f"utterance {e.args[0]!r} not in {self.meta.get('name', 'store')}") from None

    def vector(self, uid):
        return self.embeddings[self._rows([uid])[0]]

    def gather(self, uids):
        return self.embeddings[self._rows(uids)]

    def gather_probs(self, uids):
        return self.probs[self._rows(uids)]

    def save(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "index.tsv").write_text(STORE_TAG + "\n" + "".join(f"{u}\n" for u in self.ids))
        write_embedding_file(d / "embeddings.emb", self.embeddings)
        write_embedding_file(d / "probs.emb", self.probs)
        (d / "meta.json").write_text(json.dumps(self.meta, sort_keys=True, indent=1) + "\n")

    @classmethod
    def load(cls, directory):
        d = Path(directory)
        if not (d / "index.tsv").is_file():
            raise MissingStoreError(f"no embedding store at {d}")
        lines = (d / "index.tsv").read_text().splitlines()
        if not lines or lines[0] != STORE_TAG:
            raise MissingStoreError(f"{d}/index.tsv is not an embedding store index")
        ids = lines[1:]
        emb = read_embedding_file(d / "embeddings.emb")
        probs = read_embedding_file(d / "probs.emb")
        if emb.shape[0] != len(ids) or probs.shape[0] != len(ids):
            raise MissingStoreError(f"{d}: index has {len(ids)} ids but payloads have "
                                    f"{emb.shape[0]} / {probs.shape[0]} rows")
        meta = json.loads((d / "meta.json").read_text()) if (d / "meta.json").is_file() else {}
        return cls(ids, emb, probs, meta)
