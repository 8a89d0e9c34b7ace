"""Profile ingestion: parsers, perf adapter, normalization and writers."""
