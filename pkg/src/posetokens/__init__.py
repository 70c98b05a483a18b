"""Compositional discrete pose tokens: tokenizer, estimator, evaluation, CLI."""

__version__ = "0.1.0"
