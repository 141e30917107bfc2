"""Bundled experiment configurations (JSON)."""
