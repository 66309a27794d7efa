"""Decoding workbench for repetition and rotated surface codes."""

__version__ = "0.1.0"
