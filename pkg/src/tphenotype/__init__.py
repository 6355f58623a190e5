"""Temporal phenotyping: Laplace embeddings, predictive path similarity and graph-constrained clustering."""

__version__ = "0.1.0"
