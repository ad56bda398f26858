"""Bootstrapped multilingual semantic parsing: data projection and a copy-enabled parser."""

__version__ = "0.1.0"
