"""Bundled mini CSV copies of the synthetic fixtures."""
