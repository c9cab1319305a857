"""Dynamic mixtures of rotated Clayton copulas."""

__version__ = "0.1.0"
