"""Collaborative detection and localization of HTTP bypass ("spectral") hijacking."""

__version__ = "0.1.0"
