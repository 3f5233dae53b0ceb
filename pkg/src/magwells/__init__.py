"""Semiclassical tunneling between two purely magnetic wells."""

__version__ = "0.1.0"
