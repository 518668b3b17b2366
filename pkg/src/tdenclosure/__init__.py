"""Time-domain enclosure method toolkit for dissipative obstacles."""

__version__ = "0.1.0"
