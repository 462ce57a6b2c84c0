"""Online continual learning for streaming fault diagnosis."""

__version__ = "0.1.0"
