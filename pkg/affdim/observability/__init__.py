"""Observability tools for affdim."""
from affdim.observability.logger import setup_logger, get_logger
from affdim.observability.tracer import Tracer

__all__ = ["setup_logger", "get_logger", "Tracer"]
