"""Desk-scale latent-world-model driving stack with safety constraints and demos."""

__version__ = "0.1.0"
