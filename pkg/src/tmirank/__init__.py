"""Transferability scoring of pre-trained models from precomputed embeddings."""

__version__ = "0.1.0"
