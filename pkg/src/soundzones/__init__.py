"""Centralized and diffusion-based adaptive pressure matching for personal sound zones."""

__version__ = "0.1.0"
