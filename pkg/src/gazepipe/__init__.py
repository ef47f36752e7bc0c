"""Appearance-based 3D gaze estimation: normalization, multi-stream network, temporal head, evaluation."""

__version__ = "0.1.0"
