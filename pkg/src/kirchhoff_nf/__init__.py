"""Normal-form toolkit for the Kirchhoff equation on the torus."""

__version__ = "0.1.0"
