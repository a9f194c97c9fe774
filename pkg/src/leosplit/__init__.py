"""Split-inference planning and activation compression for LEO satellite chains."""

__version__ = "0.1.0"
