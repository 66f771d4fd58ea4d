"""Cyber-physical intrusion detection from fused network and process features."""

from .ingest import EventLabel, EventSpan, PacketRecord, PhysicalRecord

__version__ = "0.1.0"

__all__ = ["EventLabel", "EventSpan", "PacketRecord", "PhysicalRecord", "__version__"]
