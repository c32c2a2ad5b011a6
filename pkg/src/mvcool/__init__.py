"""Modular-variable cooling of a harmonic oscillator coupled to a spin."""

from .params import MOMENTUM, POSITION, ProtocolParams, RadialModes, RoundParams, ThermalSpec

__version__ = "0.1.0"

__all__ = ["MOMENTUM", "POSITION", "ProtocolParams", "RadialModes", "RoundParams", "ThermalSpec", "__version__"]
