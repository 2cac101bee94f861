"""renops: renormalized multiscale neural operators on sparse graphs."""

__version__ = "0.1.0"
