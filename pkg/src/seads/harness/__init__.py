"""Operational surface: configuration, checkpoints, evaluation, baseline and CLI."""
