"""Explicit weighted solutions of the dbar equation via multiplier functions."""
__version__ = "0.1.0"
