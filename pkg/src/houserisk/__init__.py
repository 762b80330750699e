"""Address-level car-accident-risk toolkit."""

__version__ = "0.1.0"
