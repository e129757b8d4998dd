"""Energy-preserving mixed finite elements for incompressible MHD."""

__version__ = "0.1.0"
