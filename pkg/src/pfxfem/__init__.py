"""Combined phase-field / XFEM brittle fracture on a fixed background mesh."""

__version__ = "0.1.0"
