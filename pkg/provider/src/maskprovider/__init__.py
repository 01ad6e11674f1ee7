"""Reference implementation of the mask-provider subprocess protocol."""

__version__ = "0.1.0"
