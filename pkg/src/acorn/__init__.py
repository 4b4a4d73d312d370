"""Adversarial socialbot learning: hierarchical RL agents against an interval bot detector."""

__version__ = "0.1.0"
