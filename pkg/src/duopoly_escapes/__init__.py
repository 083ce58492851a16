"""Learning, mean dynamics and escape analysis for algorithmic pricing in a duopoly."""

__version__ = "0.1.0"
