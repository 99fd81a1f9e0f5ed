"""Boomerang local sampling for audio on a toy latent diffusion model."""

__version__ = "0.1.0"
