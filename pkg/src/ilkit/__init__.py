"""Bilevel optimisation toolkit for self-supervised neuro-symbolic learning."""

__version__ = "0.1.0"
