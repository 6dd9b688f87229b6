"""Simulation study tests."""
