"""Training, detection and synthetic experiment orchestration."""
