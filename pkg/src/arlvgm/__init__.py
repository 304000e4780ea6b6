"""Identification of autoregressive latent-variable graphical models."""

__version__ = "0.1.0"
