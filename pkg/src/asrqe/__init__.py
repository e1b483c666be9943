"""Referenceless ASR hypothesis quality estimation by pairwise ranking."""

__version__ = "0.1.0"
