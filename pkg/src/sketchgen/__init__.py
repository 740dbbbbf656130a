"""Grammar-guided code completion with holes."""

__version__ = "0.1.0"
