"""Feature selection by distances between empirical distributions."""

__version__ = "0.1.0"
