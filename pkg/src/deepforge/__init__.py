"""deepforge: offline-testable synthesis pipeline for deep-research agent data."""

__version__ = "0.1.0"
