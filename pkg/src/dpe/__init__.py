"""Subword segmentation as a latent variable: exact DP marginalization and DPE."""

__version__ = "0.1.0"
