"""CRUISE: curriculum-based iterative self-play for multi-drone racing."""

__version__ = "0.1.0"
