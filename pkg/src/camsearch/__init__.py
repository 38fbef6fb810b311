"""Energy-aware search for a low-noise camera position on a 6-DoF robot arm."""

__version__ = "0.1.0"
