"""Find shell commands by tag instead of by name."""

__version__ = "0.1.0"
