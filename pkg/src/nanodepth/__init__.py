"""Compact monocular depth-estimation networks on a from-scratch numpy engine."""
__version__ = "0.1.0"
