"""Seeded mini-batching over conversations and flat utterances."""
from dataclasses import dataclass

import numpy as np

from ..errors import EmptySplitError

PAD_LABEL = -1


@dataclass
class ConversationBatch:
    conversation_ids: list
    utterance_ids: list      # per conversation, in order
    labels: np.ndarray       # (B, L_max), PAD_LABEL on padding
    mask: np.ndarray         # (B, L_max) bool

    @property
    def flat_ids(self):
        return [u for conv in self.utterance_ids for u in conv]

    @property
    def flat_labels(self):
        return self.labels[self.mask]


def _order(n, seed, epoch):
    if seed is None:
        return np.arange(n)
    return np.random.default_rng([seed, epoch]).permutation(n)


def batch_conversations(manifest, split, batch_size, seed=None, epoch=0):
    """Yield padded conversation batches covering ``split`` exactly once.

    ``seed=None`` keeps manifest order; otherwise the order is a pure
    function of ``(seed, epoch)``.
    """
    convs = manifest.conversation_ids(split)
    if not convs:
        raise EmptySplitError(f"split {split!r} has no conversations")
    order = _order(len(convs), seed, epoch)
    for start in range(0, len(convs), batch_size):
        ids = [convs[i] for i in order[start:start + batch_size]]
        utts = [manifest.conversations[c] for c in ids]
        L = max(len(u) for u in utts)
        labels = np.full((len(ids), L), PAD_LABEL, dtype=np.int64)
        mask = np.zeros((len(ids), L), dtype=bool)
        for i, u in enumerate(utts):
            labels[i, : len(u)] = [manifest.label(x) for x in u]
            mask[i, : len(u)] = True
        yield ConversationBatch(ids, utts, labels, mask)


def batch_utterances(manifest, split, batch_size, seed=None, epoch=0):
    """Yield lists of utterance ids (flat, ignoring conversation structure)."""
    uids = manifest.utterance_ids(split)
    if not uids:
        raise EmptySplitError(f"split {split!r} has no utterances")
    order = _order(len(uids), seed, epoch)
    for start in range(0, len(uids), batch_size):
        yield [uids[i] for i in order[start:start + batch_size]]
