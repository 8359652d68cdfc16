"""Deterministic simulator of mobile password-manager autofill security."""

__version__ = "0.1.0"
