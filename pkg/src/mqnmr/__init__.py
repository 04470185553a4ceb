"""Multiple-quantum NMR coherence encoding in the z and x bases."""

__version__ = "0.1.0"
