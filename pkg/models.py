"""
Database models
"""
import json

from sqlalchemy import Column, DateTime, Integer, String, Text
from sqlalchemy.sql import func

from db import Base


class PumpRun(Base):
    __tablename__ = "pump_runs"

    id = Column(Integer, primary_key=True, index=True)
    grammar = Column(String(256), nullable=False, index=True)
    order = Column(Integer, nullable=False)
    offset = Column(Integer, nullable=False)
    period = Column(Integer, nullable=False)
    c = Column(Integer, nullable=False)
    d = Column(Integer, nullable=False)
    prefix = Column(Integer, nullable=False)
    confidence = Column(String(32), nullable=False)
    certificate = Column(Text, nullable=False)
    created_at = Column(DateTime(timezone=True), server_default=func.now())

    @classmethod
    def from_certificate(cls, cert) -> "PumpRun":
        """Ledger row for a PumpChainCertificate"""
        return cls(
            grammar=cert.grammar or "triple",
            order=cert.order,
            offset=cert.j,
            period=cert.k,
            c=cert.c,
            d=cert.d,
            prefix=cert.prefix,
            confidence=cert.confidence,
            certificate=json.dumps(cert.to_dict(), default=str),
        )

    def summary(self) -> dict:
        return {
            "id": self.id,
            "grammar": self.grammar,
            "order": self.order,
            "j": self.offset,
            "k": self.period,
            "c": self.c,
            "d": self.d,
            "prefix": self.prefix,
            "confidence": self.confidence,
            "created_at": self.created_at,
        }

    def __repr__(self):
        return f"<PumpRun {self.grammar} j={self.offset} k={self.period}>"
