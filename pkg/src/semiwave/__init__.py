"""Minimal wave speeds and semi-wavefront profiles for non-local
reaction-diffusion equations with distributed time delay."""

__version__ = "0.1.0"
