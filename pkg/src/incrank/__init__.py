"""Incremental task learning with low-rank weight increments."""
