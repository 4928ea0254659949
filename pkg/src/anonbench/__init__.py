"""Embedding-space evaluation and attack toolkit for speaker anonymization."""

__version__ = "0.1.0"
