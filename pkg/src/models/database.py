"""SQLAlchemy models for the diagnosis history ledger."""
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Union

from sqlalchemy import JSON, Column, DateTime, Float, ForeignKey, Integer, String, Text, create_engine
from sqlalchemy.orm import declarative_base, relationship, sessionmaker

Base = declarative_base()


def _utcnow() -> datetime:
    return datetime.now(timezone.utc).replace(tzinfo=None)


class DiagnosisRecord(Base):
    """One detect or diagnose invocation."""
    __tablename__ = "diagnoses"

    id = Column(Integer, primary_key=True, index=True)
    created_at = Column(DateTime, default=_utcnow, index=True)
    program = Column(String, nullable=False, index=True)
    version_label = Column(String, nullable=True)
    overall_verdict = Column(String, nullable=False)
    runs_total = Column(Integer, nullable=False)
    runs_anomalous = Column(Integer, nullable=False)
    regressed_functions = Column(JSON, nullable=True)
    winners = Column(JSON, nullable=True)  # function -> winning counter
    bundle_checksum = Column(String, nullable=True)

    report_json = Column(Text, nullable=False)
    config_json = Column(JSON, nullable=True)

    metrics = relationship("MetricsSnapshot", back_populates="diagnosis", uselist=False)


class MetricsSnapshot(Base):
    """Evaluation metrics of a diagnosis run against ground truth."""
    __tablename__ = "metrics_snapshots"

    id = Column(Integer, primary_key=True, index=True)
    diagnosis_id = Column(Integer, ForeignKey("diagnoses.id"), nullable=False)
    snapshot_date = Column(DateTime, default=_utcnow, index=True)

    run_fpr = Column(Float, nullable=True)
    run_fnr = Column(Float, nullable=True)
    function_f1 = Column(Float, nullable=True)

    additional_metrics = Column(JSON, nullable=True)

    diagnosis = relationship("DiagnosisRecord", back_populates="metrics")


def get_database_url(db_path: Union[str, Path]) -> str:
    return f"sqlite:///{db_path}"


def get_engine(db_path: Union[str, Path]):
    """Create a SQLAlchemy engine for the ledger file, creating its directory."""
    os.makedirs(os.path.dirname(str(db_path)) or ".", exist_ok=True)
    return create_engine(get_database_url(db_path), connect_args={"check_same_thread": False})


def get_session_factory(db_path: Union[str, Path]):
    """Session factory bound to the ledger, with tables created."""
    engine = get_engine(db_path)
    Base.metadata.create_all(bind=engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)
