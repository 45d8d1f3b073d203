"""3D same-different active-vision task and training stack."""

__version__ = "0.1.0"
