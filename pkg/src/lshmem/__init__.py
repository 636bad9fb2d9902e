"""Embedding tables served from a fixed parameter budget, with memory shared
according to the Jaccard similarity of categorical values' occurrence sets."""

__version__ = "0.1.0"
