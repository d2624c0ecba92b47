"""genwave: per-epsilon wave solver and energy-estimate verification harness."""

__version__ = "0.1.0"
