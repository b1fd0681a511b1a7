"""Resonant pumping of solitary packets in the cubic Klein-Gordon equation."""
__version__ = "0.1.0"
