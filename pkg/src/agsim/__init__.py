"""Classical simulation of Gaussian circuits with adaptive measurements."""

__version__ = "0.1.0"
