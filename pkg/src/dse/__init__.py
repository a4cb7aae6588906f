"""Discriminative subspace emersion: relevance ensembles across two populations."""

__version__ = "0.1.0"
