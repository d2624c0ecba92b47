"""genwave-figs: batch figure renderer for genwave artifacts."""

__version__ = "0.1.0"
