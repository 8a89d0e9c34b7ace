"""Autoencoder and clustering models."""
