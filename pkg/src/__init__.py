"""Reward-guided diffusion policy optimization for smoke removal."""

__version__ = "0.3.0"
