"""Seeded synthetic profile generation and defect injection."""
