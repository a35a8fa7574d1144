"""Four-level quantum-dot simulator for stimulated down-conversion spectra."""

__version__ = "0.1.0"
