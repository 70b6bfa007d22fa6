"""Symbolic skill discovery (SEADS) for board games manipulated by a cursor."""

__version__ = "0.1.0"
