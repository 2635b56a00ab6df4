"""Massive MIMO downlink with MRT precoding under channel aging and phase noise."""

__version__ = "0.1.0"
