"""Utility helpers shared across pecl-lab."""
