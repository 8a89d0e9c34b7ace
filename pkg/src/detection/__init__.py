"""Thresholds, classification, metrics and root-cause ranking."""
