"""Metro passenger density prediction from tap-in/tap-out smart-card trips."""

__version__ = "0.1.0"
