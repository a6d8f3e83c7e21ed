"""EEG virtual channel generation and anxiety classification toolkit."""

__version__ = "0.1.0"
