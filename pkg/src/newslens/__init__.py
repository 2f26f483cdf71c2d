"""Entity-pair context analytics for news source content-selection preferences."""

__version__ = "0.1.0"
