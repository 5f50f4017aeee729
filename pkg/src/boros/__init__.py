"""Simulator for payment channels, channel hubs and cross-channel transfers."""

__version__ = "0.1.0"
