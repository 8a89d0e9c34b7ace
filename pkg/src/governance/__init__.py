"""Diagnosis history ledger."""
