"""Hierarchical cross-attention emotion recognition over precomputed audio/text embeddings."""
__version__ = "0.1.0"
