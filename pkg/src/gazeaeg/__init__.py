"""Zero-shot essay scoring with gaze behaviour as an auxiliary task."""

__version__ = "0.1.0"
