"""Simulated execution-layer nodes."""
