"""Data models: Pydantic schemas and SQLAlchemy database models."""
