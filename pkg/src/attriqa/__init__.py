"""Attributed QA: answer+evidence pipelines over a paragraph corpus, plus the
evaluation stack (exact match, entailment-based scoring, human ratings)."""

__version__ = "0.1.0"
