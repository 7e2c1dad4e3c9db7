"""Manifests, embedding files, stores, batching and synthetic data."""
from .batching import PAD_LABEL, ConversationBatch, batch_conversations, batch_utterances
from .embfile import parse_embedding_bytes, read_embedding_file, write_embedding_file
from .manifest import FIELDS, Manifest, Utterance, load_manifest, write_manifest
from .store import EmbeddingStore
from .synthetic import (SyntheticSpec, bayes_accuracies, bayes_table, generate_synthetic,
                        load_sidecar)

__all__ = [
    "PAD_LABEL", "ConversationBatch", "batch_conversations", "batch_utterances",
    "read_embedding_file", "write_embedding_file", "parse_embedding_bytes",
    "FIELDS", "Manifest", "Utterance", "load_manifest", "write_manifest",
    "EmbeddingStore", "SyntheticSpec", "bayes_accuracies", "bayes_table",
    "generate_synthetic", "load_sidecar",
]
