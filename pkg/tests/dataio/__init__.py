"""Data input/output tests."""
