"""Test suite for gevgp."""
