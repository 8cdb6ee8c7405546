"""Order-book replay and colloid/fluid statistics for limit order books."""

__version__ = "0.1.0"
