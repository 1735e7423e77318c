"""Toolkit for generating, measuring, and authenticating 2D skull-CT segments."""

__version__ = "0.1.0"
