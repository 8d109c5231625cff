"""Paracontrolled calculus for singular kinetic equations on a phase-space torus."""
__version__ = "0.1.0"
