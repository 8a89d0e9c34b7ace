"""Tests for perfsentinel."""
