"""Sequence-to-sequence hierarchical text classification with class-definition vectors."""

__version__ = "0.1.0"
