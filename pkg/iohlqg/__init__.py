"""iohlqg - LQG controller synthesis by policy gradient over input-output-history gains."""

__version__ = "0.3.0"
