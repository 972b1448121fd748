"""Commit rationale extraction: artifact linking, sentence labeling and summary generation."""

__version__ = "0.1.0"
