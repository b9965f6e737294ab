"""Long-range fast-decay RBM wave functions for 1D spin-1/2 chains."""

__version__ = "0.1.0"
